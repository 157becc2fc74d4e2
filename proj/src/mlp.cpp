#include "seqci/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "seqci/common.hpp"

namespace seqci {

namespace {

void validate_spec(const MlpSpec& spec) {
    if (spec.widths.size() < 3) {
        throw ShapeError("mlp: spec needs at least one hidden layer (input, hidden..., output)");
    }
    for (int w : spec.widths) {
        if (w < 1) throw ShapeError("mlp: layer widths must be >= 1");
    }
    if (!(spec.dropout_rate >= 0.0 && spec.dropout_rate < 1.0)) {
        throw ShapeError("mlp: dropout_rate must lie in [0, 1)");
    }
}

inline void apply_output_activation(OutputActivation act, Matrix& z) {
    if (act == OutputActivation::Logistic) {
        z = 1.0 / (1.0 + (-z.array()).exp());
    }
}

}  // namespace

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        n += static_cast<std::size_t>(weights[l].size()) + static_cast<std::size_t>(biases[l].size());
    }
    return n;
}

Mlp mlp_init(const MlpSpec& spec) {
    validate_spec(spec);
    Mlp m;
    m.spec = spec;
    Rng rng = Rng(spec.seed).split(0x6d6c705fULL);  // dedicated init stream
    const std::size_t layers = spec.widths.size() - 1;
    m.weights.resize(layers);
    m.biases.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        const int fan_in = spec.widths[l];
        const int fan_out = spec.widths[l + 1];
        const double limit = std::sqrt(6.0 / fan_in);
        m.weights[l].resize(fan_in, fan_out);
        // Column-major fill so the draw order matches storage order.
        double* p = m.weights[l].data();
        for (Eigen::Index k = 0; k < m.weights[l].size(); ++k) p[k] = rng.uniform(-limit, limit);
        m.biases[l] = Vector::Zero(fan_out);
    }
    return m;
}

const Matrix& forward_pass(const Mlp& m, const Matrix& X, ForwardCache& cache, bool train_mode,
                           double dropout_rate, Rng* rng) {
    if (X.cols() != m.input_dim()) {
        throw ShapeError("mlp forward: input has " + std::to_string(X.cols()) +
                         " features, expected " + std::to_string(m.input_dim()));
    }
    const bool dropout = train_mode && dropout_rate > 0.0;
    if (dropout && rng == nullptr) throw ShapeError("mlp forward: dropout requires an rng");
    const std::size_t layers = m.layer_count();
    cache.acts.resize(layers + 1);
    cache.masks.assign(dropout ? layers - 1 : 0, Matrix());
    cache.acts[0] = X;
    const double keep = 1.0 - dropout_rate;
    for (std::size_t l = 0; l < layers; ++l) {
        Matrix& z = cache.acts[l + 1];
        z.noalias() = cache.acts[l] * m.weights[l];
        z.rowwise() += m.biases[l].transpose();
        if (l + 1 < layers) {
            z = z.cwiseMax(0.0);  // ReLU
            if (dropout) {
                Matrix& mask = cache.masks[l];
                mask.resize(z.rows(), z.cols());
                double* p = mask.data();
                const double inv_keep = 1.0 / keep;
                for (Eigen::Index k = 0; k < mask.size(); ++k) {
                    p[k] = rng->uniform() < keep ? inv_keep : 0.0;
                }
                z.array() *= mask.array();
            }
        } else {
            apply_output_activation(m.spec.output, z);
        }
    }
    return cache.acts.back();
}

Vector forward(const Mlp& m, const Vector& x, bool train_mode, Rng* rng) {
    if (!x.allFinite()) throw ShapeError("mlp forward: non-finite input");
    ForwardCache cache;
    const Matrix& out = forward_pass(m, x.transpose(), cache, train_mode, m.spec.dropout_rate, rng);
    return out.row(0).transpose();
}

Matrix forward_batch(const Mlp& m, const Matrix& X) {
    ForwardCache cache;
    return forward_pass(m, X, cache, false, 0.0, nullptr);
}

void Gradients::scale(double c) {
    for (auto& g : dW) g *= c;
    for (auto& g : db) g *= c;
}

Matrix backward_pass(const Mlp& m, const ForwardCache& cache, const Matrix& d_out_pre,
                     Gradients& grads, bool want_input_grad) {
    const std::size_t layers = m.layer_count();
    grads.dW.resize(layers);
    grads.db.resize(layers);
    Matrix delta = d_out_pre;
    for (std::size_t l = layers; l-- > 0;) {
        grads.dW[l].noalias() = cache.acts[l].transpose() * delta;
        grads.db[l] = delta.colwise().sum();
        if (l == 0 && !want_input_grad) return Matrix();
        Matrix d_in;
        d_in.noalias() = delta * m.weights[l].transpose();
        if (l == 0) return d_in;
        // Through dropout mask (if any), then the ReLU of layer l-1.
        if (!cache.masks.empty() && cache.masks[l - 1].size() > 0) {
            d_in.array() *= cache.masks[l - 1].array();
        }
        delta = (cache.acts[l].array() > 0.0).cast<double>() * d_in.array();
    }
    return Matrix();
}

double loss_value(Loss loss, const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw ShapeError("loss: prediction/target shape mismatch");
    }
    if (loss == Loss::Squared) {
        return (pred - target).squaredNorm() / static_cast<double>(pred.rows());
    }
    // Logistic loss with outputs clamped inside the loss only.
    const auto p = pred.array().min(1.0 - 1e-7).max(1e-7);
    const auto y = target.array();
    return -(y * p.log() + (1.0 - y) * (1.0 - p).log()).sum() / static_cast<double>(pred.rows());
}

Matrix loss_grad_pre(Loss loss, OutputActivation out_act, const Matrix& pred,
                     const Matrix& target) {
    if (loss == Loss::Logistic) {
        if (out_act != OutputActivation::Logistic) {
            throw ShapeError("logistic loss requires a logistic output head");
        }
        return pred - target;  // canonical link
    }
    Matrix d = 2.0 * (pred - target);
    if (out_act == OutputActivation::Logistic) {
        d.array() *= pred.array() * (1.0 - pred.array());
    }
    return d;
}

Gradients gradient(const Mlp& m, const Matrix& X, const Matrix& Y, Loss loss) {
    ForwardCache cache;
    const Matrix& pred = forward_pass(m, X, cache, false, 0.0, nullptr);
    Gradients g;
    backward_pass(m, cache, loss_grad_pre(loss, m.spec.output, pred, Y), g, false);
    return g;
}

AdamState::AdamState(const Mlp& m) {
    mW.reserve(m.layer_count());
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        mW.push_back(Matrix::Zero(m.weights[l].rows(), m.weights[l].cols()));
        vW.push_back(Matrix::Zero(m.weights[l].rows(), m.weights[l].cols()));
        mb.push_back(Vector::Zero(m.biases[l].size()));
        vb.push_back(Vector::Zero(m.biases[l].size()));
    }
}

void AdamState::update(Mlp& m, const Gradients& g, double lr) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        mW[l] = beta1 * mW[l] + (1.0 - beta1) * g.dW[l];
        vW[l] = beta2 * vW[l].array() + (1.0 - beta2) * g.dW[l].array().square();
        m.weights[l].array() -=
            lr * (mW[l].array() / c1) / ((vW[l].array() / c2).sqrt() + eps);
        mb[l] = beta1 * mb[l] + (1.0 - beta1) * g.db[l];
        vb[l] = beta2 * vb[l].array() + (1.0 - beta2) * g.db[l].array().square();
        m.biases[l].array() -=
            lr * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + eps);
    }
}

Mlp train(Mlp m, const Matrix& X, const Matrix& Y, Loss loss, const TrainConfig& cfg, Rng& rng) {
    if (X.rows() == 0) throw EstimationError("train: empty dataset");
    if (X.rows() != Y.rows()) throw ShapeError("train: input/target count mismatch");
    if (Y.cols() != m.output_dim()) throw ShapeError("train: target width mismatch");
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0)) {
        throw ConfigError("train: epochs and batch_size must be >= 1, learning_rate > 0");
    }
    if (loss == Loss::Logistic) {
        if (((Y.array() != 0.0) && (Y.array() != 1.0)).any()) {
            throw ShapeError("train: logistic loss requires {0,1} targets");
        }
    }
    // Exactly constant regression targets: intercept-only net fits perfectly.
    if (loss == Loss::Squared && Y.size() > 0) {
        const Vector first = Y.row(0).transpose();
        bool constant = true;
        for (Eigen::Index r = 1; r < Y.rows() && constant; ++r) {
            constant = (Y.row(r).transpose().array() == first.array()).all();
        }
        if (constant) {
            for (auto& w : m.weights) w.setZero();
            for (auto& b : m.biases) b.setZero();
            m.biases.back() = first;
            return m;
        }
    }

    const Eigen::Index n = X.rows();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    AdamState adam(m);
    ForwardCache cache;
    Gradients grads;
    Matrix Xb, Yb;
    double best = std::numeric_limits<double>::infinity();
    int stale = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates reshuffle per epoch.
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.below(i)]);
        }
        double epoch_loss = 0.0;
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
            Xb.resize(b, X.cols());
            Yb.resize(b, Y.cols());
            for (Eigen::Index r = 0; r < b; ++r) {
                Xb.row(r) = X.row(order[static_cast<std::size_t>(start + r)]);
                Yb.row(r) = Y.row(order[static_cast<std::size_t>(start + r)]);
            }
            const Matrix& pred = forward_pass(m, Xb, cache, true, cfg.dropout_rate, &rng);
            const double batch_loss = loss_value(loss, pred, Yb);
            if (!std::isfinite(batch_loss)) {
                throw EstimationError("train: non-finite loss at epoch " + std::to_string(epoch));
            }
            epoch_loss += batch_loss * static_cast<double>(b);
            Matrix d = loss_grad_pre(loss, m.spec.output, pred, Yb);
            d /= static_cast<double>(b);  // mean-loss gradient
            backward_pass(m, cache, d, grads, false);
            adam.update(m, grads, cfg.learning_rate);
        }
        epoch_loss /= static_cast<double>(n);
        if (cfg.patience > 0) {
            if (epoch_loss < best - 1e-6) {
                best = epoch_loss;
                stale = 0;
            } else if (++stale >= cfg.patience) {
                break;
            }
        }
    }
    return m;
}

void save_checkpoint(const Mlp& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot open " + path + " for writing");
    const char magic[8] = {'S', 'E', 'Q', 'C', 'I', 'M', 'L', 'P'};
    out.write(magic, 8);
    const std::uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint32_t n_widths = static_cast<std::uint32_t>(m.spec.widths.size());
    out.write(reinterpret_cast<const char*>(&n_widths), sizeof(n_widths));
    for (int w : m.spec.widths) {
        const std::int64_t v = w;
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    const std::uint8_t act = m.spec.output == OutputActivation::Logistic ? 1 : 0;
    out.write(reinterpret_cast<const char*>(&act), sizeof(act));
    out.write(reinterpret_cast<const char*>(&m.spec.dropout_rate), sizeof(double));
    out.write(reinterpret_cast<const char*>(&m.spec.seed), sizeof(std::uint64_t));
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        out.write(reinterpret_cast<const char*>(m.weights[l].data()),
                  static_cast<std::streamsize>(sizeof(double) * m.weights[l].size()));
        out.write(reinterpret_cast<const char*>(m.biases[l].data()),
                  static_cast<std::streamsize>(sizeof(double) * m.biases[l].size()));
    }
    if (!out) throw DataError("checkpoint: write failed for " + path);
}

Mlp load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != "SEQCIMLP") {
        throw DataError("checkpoint: bad magic in " + path);
    }
    std::uint32_t version = 0, n_widths = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != 1) throw DataError("checkpoint: unsupported version");
    in.read(reinterpret_cast<char*>(&n_widths), sizeof(n_widths));
    if (!in || n_widths < 3 || n_widths > 64) throw DataError("checkpoint: bad layer count");
    MlpSpec spec;
    spec.widths.resize(n_widths);
    for (auto& w : spec.widths) {
        std::int64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        w = static_cast<int>(v);
    }
    std::uint8_t act = 0;
    in.read(reinterpret_cast<char*>(&act), sizeof(act));
    spec.output = act == 1 ? OutputActivation::Logistic : OutputActivation::Identity;
    in.read(reinterpret_cast<char*>(&spec.dropout_rate), sizeof(double));
    in.read(reinterpret_cast<char*>(&spec.seed), sizeof(std::uint64_t));
    Mlp m = mlp_init(spec);
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        in.read(reinterpret_cast<char*>(m.weights[l].data()),
                static_cast<std::streamsize>(sizeof(double) * m.weights[l].size()));
        in.read(reinterpret_cast<char*>(m.biases[l].data()),
                static_cast<std::streamsize>(sizeof(double) * m.biases[l].size()));
    }
    if (!in) throw DataError("checkpoint: truncated file " + path);
    return m;
}

}  // namespace seqci
