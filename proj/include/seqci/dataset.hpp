// Core dataset types, the JSON-lines on-disk format, and ingestion of
// externally produced per-segment embeddings.
//
// File format (version 1): first line is a metadata header
//   {"format":"seqci.dataset","version":1,"d_r":<int>,"s_max":<int>}
// followed by one unit per line:
//   {"y":<real>,"w":[0|1,...],"r":[[...],[...],...]}
// Serialization is canonical (fixed key order, shortest round-trip floats),
// so identical datasets produce byte-identical files.
#pragma once

#include <string>
#include <vector>

#include "seqci/linalg.hpp"

namespace seqci {

// One unit: outcome, binary treatment path, and per-segment embeddings.
struct Trajectory {
    double y = 0.0;
    std::vector<int> w;       // length s_len, entries in {0,1}
    std::vector<Vector> r;    // s_len embeddings, each of dimension d_r
    int s_len() const { return static_cast<int>(w.size()); }
};

struct Dataset {
    std::vector<Trajectory> units;
    int d_r = 0;
    int s_max = 0;
    int n() const { return static_cast<int>(units.size()); }
};

// Simulator-only ground truth retained alongside a simulated dataset.
struct LatentTruth {
    std::vector<std::vector<Vector>> u;  // per unit, per segment confounder path
    std::vector<double> epsilon;         // per unit outcome noise
};

// Throws DataError naming the offending unit/segment on any invariant
// violation (never repairs silently).
void validate_dataset(const Dataset& ds);

Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& ds, const std::string& path);

// Assemble a dataset from three aligned files:
//  - embeddings: JSON-lines, one unit per line, a list of embedding vectors;
//  - outcomes CSV with header unit_id,y;
//  - treatments CSV with header unit_id,segment_index,w (segment_index 1-based).
// 32-bit float payloads are widened to 64-bit on read.
Dataset ingest_embeddings(const std::string& embeddings_path, const std::string& outcomes_path,
                          const std::string& treatments_path);

}  // namespace seqci
