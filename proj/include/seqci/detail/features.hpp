// Internal helpers to assemble padded/masked history feature rows.
#pragma once

#include "seqci/dataset.hpp"
#include "seqci/estimator.hpp"

namespace seqci::detail {

// Row reference that tolerates the stride of a column-major matrix row.
using RowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

// Writes one history-feature row: the first w_len treatments, the first
// f_len deconfounder vectors (rows enc.row(unit, 1..f_len)), their presence
// masks, and the segment count. `row` must have lay.history_dim() entries.
inline void fill_history_row(const FeatureLayout& lay, const Trajectory& traj, int unit,
                             const EncodedData& enc, int w_len, int f_len, RowRef row) {
    row.setZero();
    for (int j = 0; j < w_len; ++j) {
        row[j] = static_cast<double>(traj.w[static_cast<std::size_t>(j)]);
        row[lay.s_max + j] = 1.0;
    }
    const int f0 = lay.f_block();
    for (int j = 0; j < f_len; ++j) {
        row.segment(f0 + j * lay.d_f, lay.d_f) = enc.f.row(enc.row(unit, j + 1));
        row[lay.f_mask_block() + j] = 1.0;
    }
    row[lay.history_dim() - 1] = static_cast<double>(traj.s_len());
}

// Encoder input row: embedding followed by the one-hot segment position.
inline void fill_encoder_row(const FeatureLayout& lay, const Vector& r, int s, RowRef row) {
    row.setZero();
    row.head(lay.d_r) = r;
    row[lay.d_r + s - 1] = 1.0;
}

}  // namespace seqci::detail
