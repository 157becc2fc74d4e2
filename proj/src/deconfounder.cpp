// Joint deconfounder/outcome-head training. The encoder is applied to every
// segment with shared parameters; its outputs feed the padded history
// features of the head, and gradients flow through both in one Adam step.
#include <algorithm>
#include <cmath>
#include <numeric>

#include "seqci/common.hpp"
#include "seqci/detail/features.hpp"
#include "seqci/estimator.hpp"

namespace seqci {

namespace {

MlpSpec make_spec(int in, const std::vector<int>& hidden, int out, OutputActivation act,
                  double dropout, std::uint64_t seed) {
    MlpSpec spec;
    spec.widths.push_back(in);
    spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
    spec.widths.push_back(out);
    spec.output = act;
    spec.dropout_rate = dropout;
    spec.seed = seed;
    return spec;
}

}  // namespace

DeconfounderModel fit_deconfounder(const Dataset& ds, const std::vector<int>& train_units,
                                   const DeconfounderArch& arch, const TrainConfig& cfg,
                                   Rng& rng) {
    if (train_units.empty()) throw EstimationError("fit_deconfounder: empty training split");
    DeconfounderModel model;
    model.layout = FeatureLayout{ds.s_max, arch.d_f, ds.d_r};
    const FeatureLayout& lay = model.layout;
    model.encoder = mlp_init(make_spec(lay.encoder_dim(), arch.encoder_hidden, arch.d_f,
                                       OutputActivation::Identity, cfg.dropout_rate,
                                       rng.split(1).seed()));
    model.head = mlp_init(make_spec(lay.history_dim(), arch.head_hidden, 1,
                                    OutputActivation::Identity, cfg.dropout_rate,
                                    rng.split(2).seed()));

    const int n = static_cast<int>(train_units.size());
    // Constant outcomes: the head reduces to an exact intercept fit.
    {
        const double y0 = ds.units[static_cast<std::size_t>(train_units[0])].y;
        bool constant = true;
        for (int i : train_units) {
            if (ds.units[static_cast<std::size_t>(i)].y != y0) {
                constant = false;
                break;
            }
        }
        if (constant) {
            for (auto& w : model.head.weights) w.setZero();
            for (auto& b : model.head.biases) b.setZero();
            model.head.biases.back()[0] = y0;
            return model;
        }
    }

    // Flattened segment rows (unit-major) and static head features.
    std::vector<int> seg_offset(static_cast<std::size_t>(n));
    int total_segs = 0;
    for (int i = 0; i < n; ++i) {
        seg_offset[static_cast<std::size_t>(i)] = total_segs;
        total_segs += ds.units[static_cast<std::size_t>(train_units[static_cast<std::size_t>(i)])].s_len();
    }
    Matrix seg_x(total_segs, lay.encoder_dim());
    Matrix head_static(n, lay.history_dim());
    Vector y(n);
    EncodedData dummy_enc;  // row offsets unused while the f block stays zero
    dummy_enc.offset.assign(static_cast<std::size_t>(ds.n()), 0);
    dummy_enc.f.resize(0, lay.d_f);
    for (int i = 0; i < n; ++i) {
        const Trajectory& t = ds.units[static_cast<std::size_t>(train_units[static_cast<std::size_t>(i)])];
        for (int s = 1; s <= t.s_len(); ++s) {
            detail::fill_encoder_row(lay, t.r[static_cast<std::size_t>(s - 1)], s,
                                     seg_x.row(seg_offset[static_cast<std::size_t>(i)] + s - 1));
        }
        detail::fill_history_row(lay, t, train_units[static_cast<std::size_t>(i)], dummy_enc,
                                 t.s_len(), 0, head_static.row(i));
        y[i] = t.y;
    }

    Rng train_rng = rng.split(3);
    AdamState adam_enc(model.encoder), adam_head(model.head);
    ForwardCache enc_cache, head_cache;
    Gradients enc_grads, head_grads;
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    int stale = 0;
    Matrix enc_batch, head_batch, d_f_rows;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[train_rng.below(i)]);
        }
        double epoch_loss = 0.0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int b = std::min(cfg.batch_size, n - start);
            // Gather segment rows for the batch units.
            int batch_segs = 0;
            for (int r = 0; r < b; ++r) {
                const int u = order[static_cast<std::size_t>(start + r)];
                batch_segs +=
                    ds.units[static_cast<std::size_t>(train_units[static_cast<std::size_t>(u)])].s_len();
            }
            enc_batch.resize(batch_segs, lay.encoder_dim());
            head_batch.resize(b, lay.history_dim());
            Matrix yb(b, 1);
            int row = 0;
            for (int r = 0; r < b; ++r) {
                const int u = order[static_cast<std::size_t>(start + r)];
                const int s_len =
                    ds.units[static_cast<std::size_t>(train_units[static_cast<std::size_t>(u)])].s_len();
                enc_batch.middleRows(row, s_len) = seg_x.middleRows(seg_offset[static_cast<std::size_t>(u)], s_len);
                head_batch.row(r) = head_static.row(u);
                yb(r, 0) = y[u];
                row += s_len;
            }
            // Encoder forward, scatter f into the head features.
            const Matrix& f_out =
                forward_pass(model.encoder, enc_batch, enc_cache, true, cfg.dropout_rate, &train_rng);
            row = 0;
            const int f0 = lay.f_block();
            for (int r = 0; r < b; ++r) {
                const int u = order[static_cast<std::size_t>(start + r)];
                const int s_len =
                    ds.units[static_cast<std::size_t>(train_units[static_cast<std::size_t>(u)])].s_len();
                for (int s = 0; s < s_len; ++s) {
                    head_batch.row(r).segment(f0 + s * lay.d_f, lay.d_f) = f_out.row(row + s);
                    head_batch(r, lay.f_mask_block() + s) = 1.0;
                }
                row += s_len;
            }
            const Matrix& pred =
                forward_pass(model.head, head_batch, head_cache, true, cfg.dropout_rate, &train_rng);
            const double batch_loss = loss_value(Loss::Squared, pred, yb);
            if (!std::isfinite(batch_loss)) {
                throw EstimationError("fit_deconfounder: non-finite loss at epoch " +
                                      std::to_string(epoch));
            }
            epoch_loss += batch_loss * b;
            Matrix d_pred = (2.0 / b) * (pred - yb);
            const Matrix d_head_in =
                backward_pass(model.head, head_cache, d_pred, head_grads, true);
            // Gather gradients of the f blocks back to encoder output rows.
            d_f_rows.resize(batch_segs, lay.d_f);
            row = 0;
            for (int r = 0; r < b; ++r) {
                const int u = order[static_cast<std::size_t>(start + r)];
                const int s_len =
                    ds.units[static_cast<std::size_t>(train_units[static_cast<std::size_t>(u)])].s_len();
                for (int s = 0; s < s_len; ++s) {
                    d_f_rows.row(row + s) = d_head_in.row(r).segment(f0 + s * lay.d_f, lay.d_f);
                }
                row += s_len;
            }
            backward_pass(model.encoder, enc_cache, d_f_rows, enc_grads, false);
            adam_head.update(model.head, head_grads, cfg.learning_rate);
            adam_enc.update(model.encoder, enc_grads, cfg.learning_rate);
        }
        epoch_loss /= n;
        if (cfg.patience > 0) {
            if (epoch_loss < best - 1e-6) {
                best = epoch_loss;
                stale = 0;
            } else if (++stale >= cfg.patience) {
                break;
            }
        }
    }
    return model;
}

EncodedData encode_units(const DeconfounderModel& model, const Dataset& ds) {
    const FeatureLayout& lay = model.layout;
    EncodedData enc;
    enc.offset.resize(static_cast<std::size_t>(ds.n()));
    int total = 0;
    for (int i = 0; i < ds.n(); ++i) {
        enc.offset[static_cast<std::size_t>(i)] = total;
        total += ds.units[static_cast<std::size_t>(i)].s_len();
    }
    Matrix x(total, lay.encoder_dim());
    for (int i = 0; i < ds.n(); ++i) {
        const Trajectory& t = ds.units[static_cast<std::size_t>(i)];
        for (int s = 1; s <= t.s_len(); ++s) {
            detail::fill_encoder_row(lay, t.r[static_cast<std::size_t>(s - 1)], s,
                                     x.row(enc.offset[static_cast<std::size_t>(i)] + s - 1));
        }
    }
    enc.f = forward_batch(model.encoder, x);
    return enc;
}

std::vector<Vector> encode_path(const DeconfounderModel& model, const Trajectory& traj) {
    const FeatureLayout& lay = model.layout;
    if (traj.r.empty() || traj.r[0].size() != lay.d_r) {
        throw ShapeError("encode_path: embedding dimension mismatch");
    }
    Matrix x(traj.s_len(), lay.encoder_dim());
    for (int s = 1; s <= traj.s_len(); ++s) {
        detail::fill_encoder_row(lay, traj.r[static_cast<std::size_t>(s - 1)], s, x.row(s - 1));
    }
    const Matrix f = forward_batch(model.encoder, x);
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(f.rows()));
    for (Eigen::Index r = 0; r < f.rows(); ++r) out.push_back(f.row(r).transpose());
    return out;
}

double head_counterfactual(const DeconfounderModel& model, const Dataset& ds,
                           const EncodedData& enc, int unit, int w) {
    const FeatureLayout& lay = model.layout;
    const Trajectory& t = ds.units[static_cast<std::size_t>(unit)];
    Matrix row(1, lay.history_dim());
    detail::fill_history_row(lay, t, unit, enc, t.s_len(), t.s_len(), row.row(0));
    row(0, t.s_len() - 1) = static_cast<double>(w);
    ForwardCache cache;
    return forward_pass(model.head, row, cache, false, 0.0, nullptr)(0, 0);
}

}  // namespace seqci
