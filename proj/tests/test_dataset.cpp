#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "seqci/common.hpp"
#include "seqci/dataset.hpp"
#include "seqci/rng.hpp"

using namespace seqci;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Trajectory make_traj(double y, std::vector<int> w, std::vector<Vector> r) {
    Trajectory t;
    t.y = y;
    t.w = std::move(w);
    t.r = std::move(r);
    return t;
}

Vector vec2(double a, double b) {
    Vector v(2);
    v << a, b;
    return v;
}

Dataset random_dataset(Rng& rng) {
    Dataset ds;
    ds.d_r = 1 + static_cast<int>(rng.below(4));
    ds.s_max = 1 + static_cast<int>(rng.below(4));
    const int n = 1 + static_cast<int>(rng.below(8));
    for (int i = 0; i < n; ++i) {
        Trajectory t;
        t.y = rng.normal();
        const int s_len = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(ds.s_max)));
        for (int s = 0; s < s_len; ++s) {
            t.w.push_back(static_cast<int>(rng.below(2)));
            Vector v(ds.d_r);
            for (int k = 0; k < ds.d_r; ++k) v[k] = rng.normal();
            t.r.push_back(std::move(v));
        }
        ds.units.push_back(std::move(t));
    }
    return ds;
}

}  // namespace

TEST_CASE("load_dataset: minimal well-formed file") {
    const std::string path = "ds_min.jsonl";
    {
        std::ofstream out(path);
        out << R"({"format":"seqci.dataset","version":1,"d_r":2,"s_max":3})" << "\n";
        out << R"({"y":1.0,"w":[1,0],"r":[[0,0],[1,1]]})" << "\n";
    }
    const Dataset ds = load_dataset(path);
    CHECK(ds.n() == 1);
    CHECK(ds.d_r == 2);
    CHECK(ds.s_max >= 2);
    CHECK(ds.units[0].y == 1.0);
    CHECK(ds.units[0].w == std::vector<int>{1, 0});
    std::remove(path.c_str());
}

TEST_CASE("validate: ragged unit rejected naming the unit") {
    Dataset ds;
    ds.d_r = 2;
    ds.s_max = 3;
    ds.units.push_back(make_traj(1.0, {1, 0}, {vec2(0, 0), vec2(1, 1), vec2(2, 2)}));
    try {
        validate_dataset(ds);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("unit 0") != std::string::npos);
    }
}

TEST_CASE("save/load: structural identity and canonical bytes") {
    Dataset ds;
    ds.d_r = 2;
    ds.s_max = 2;
    ds.units.push_back(make_traj(0.5, {1}, {vec2(0.25, -1.75)}));
    ds.units.push_back(make_traj(-2.0, {0, 1}, {vec2(1e-3, 3.5), vec2(-0.125, 0.0)}));
    const std::string p1 = "ds_rt1.jsonl", p2 = "ds_rt2.jsonl";
    save_dataset(ds, p1);
    const Dataset back = load_dataset(p1);
    REQUIRE(back.n() == ds.n());
    CHECK(back.d_r == ds.d_r);
    CHECK(back.s_max == ds.s_max);
    for (int i = 0; i < ds.n(); ++i) {
        CHECK(back.units[i].y == ds.units[i].y);
        CHECK(back.units[i].w == ds.units[i].w);
        for (std::size_t s = 0; s < ds.units[i].r.size(); ++s) {
            CHECK((back.units[i].r[s] - ds.units[i].r[s]).norm() == 0.0);
        }
    }
    save_dataset(back, p2);
    CHECK(slurp(p1) == slurp(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("save/load: property round trip on random datasets") {
    Rng rng(2718);
    for (int trial = 0; trial < 20; ++trial) {
        const Dataset ds = random_dataset(rng);
        const std::string path = "ds_prop.jsonl";
        save_dataset(ds, path);
        const Dataset back = load_dataset(path);
        REQUIRE(back.n() == ds.n());
        for (int i = 0; i < ds.n(); ++i) {
            CHECK(back.units[i].y == ds.units[i].y);
            CHECK(back.units[i].w == ds.units[i].w);
            for (std::size_t s = 0; s < ds.units[i].r.size(); ++s) {
                CHECK((back.units[i].r[s] - ds.units[i].r[s]).norm() == 0.0);
            }
        }
        std::remove(path.c_str());
    }
}

TEST_CASE("save_dataset: empty dataset rejected") {
    Dataset ds;
    ds.d_r = 2;
    ds.s_max = 2;
    CHECK_THROWS_AS(save_dataset(ds, "ds_empty.jsonl"), DataError);
}

TEST_CASE("save/load: wide two-segment shape round trips with identical dims") {
    // Shape of the ingested-embedding application: many units, two segments,
    // high-dimensional embeddings. Payload values kept short for speed.
    Dataset ds;
    ds.d_r = 4096;
    ds.s_max = 2;
    Rng rng(9);
    ds.units.reserve(2085);
    for (int i = 0; i < 2085; ++i) {
        Trajectory t;
        t.y = static_cast<double>(i % 7);
        for (int s = 0; s < 2; ++s) {
            t.w.push_back(static_cast<int>(rng.below(2)));
            Vector v = Vector::Zero(4096);
            v[static_cast<Eigen::Index>(rng.below(4096))] = 0.5;
            t.r.push_back(std::move(v));
        }
        ds.units.push_back(std::move(t));
    }
    const std::string path = "ds_wide.jsonl";
    save_dataset(ds, path);
    const Dataset back = load_dataset(path);
    CHECK(back.n() == 2085);
    CHECK(back.d_r == 4096);
    CHECK(back.s_max == 2);
    for (int i = 0; i < back.n(); ++i) {
        CHECK(back.units[static_cast<std::size_t>(i)].s_len() == 2);
    }
    std::remove(path.c_str());
}

TEST_CASE("ingest: aligned triple assembles a dataset") {
    const std::string emb = "ing_emb.jsonl", oc = "ing_out.csv", tr = "ing_trt.csv";
    {
        std::ofstream e(emb);
        e << "[[0.5,1.5],[2.5,3.5]]\n[[1.0,0.0],[0.0,1.0]]\n";
        std::ofstream o(oc);
        o << "unit_id,y\n0,1.25\n1,-0.5\n";
        std::ofstream t(tr);
        t << "unit_id,segment_index,w\n0,1,1\n0,2,0\n1,1,0\n1,2,1\n";
    }
    const Dataset ds = ingest_embeddings(emb, oc, tr);
    CHECK(ds.n() == 2);
    CHECK(ds.d_r == 2);
    CHECK(ds.s_max == 2);
    CHECK(ds.units[0].y == 1.25);
    CHECK(ds.units[0].w == std::vector<int>{1, 0});
    CHECK(ds.units[1].r[1][1] == 1.0);

    // Non-binary treatment.
    {
        std::ofstream t(tr);
        t << "unit_id,segment_index,w\n0,1,2\n";
    }
    CHECK_THROWS_AS(ingest_embeddings(emb, oc, tr), DataError);

    // Outcome count mismatch names both counts.
    {
        std::ofstream t(tr);
        t << "unit_id,segment_index,w\n0,1,1\n0,2,0\n1,1,0\n1,2,1\n";
        std::ofstream o(oc);
        o << "unit_id,y\n0,1.0\n1,2.0\n2,3.0\n";
    }
    try {
        ingest_embeddings(emb, oc, tr);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("3") != std::string::npos);
        CHECK(msg.find("2") != std::string::npos);
    }
    std::remove(emb.c_str());
    std::remove(oc.c_str());
    std::remove(tr.c_str());
}
