// Minimal feedforward neural-network engine: dense layers, ReLU hidden
// activations, identity/logistic output, inverted dropout, mini-batch Adam
// training with squared or logistic loss.
//
// Layout convention: sample batches are (n x dim) matrices, weights[l] is
// (in x out), so a layer computes A_out = act(A_in * W + b^T).
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqci/linalg.hpp"
#include "seqci/rng.hpp"

namespace seqci {

enum class OutputActivation { Identity, Logistic };
enum class Loss { Squared, Logistic };

struct MlpSpec {
    std::vector<int> widths;  // input .. output; at least one hidden layer
    OutputActivation output = OutputActivation::Identity;
    double dropout_rate = 0.0;  // hidden-layer dropout, in [0, 1)
    std::uint64_t seed = 0;     // initialization seed
};

struct Mlp {
    MlpSpec spec;
    std::vector<Matrix> weights;  // weights[l]: (widths[l] x widths[l+1])
    std::vector<Vector> biases;   // biases[l]: widths[l+1]

    int input_dim() const { return spec.widths.front(); }
    int output_dim() const { return spec.widths.back(); }
    std::size_t layer_count() const { return weights.size(); }
    std::size_t parameter_count() const;
};

struct TrainConfig {
    int epochs = 200;
    int batch_size = 1024;
    double learning_rate = 1e-3;
    int patience = 5;  // epochs without >=1e-6 train-loss improvement; 0 disables
    double dropout_rate = 0.0;
};

// He-uniform initialization (fan-in scaled), biases zero; deterministic in
// spec.seed.
Mlp mlp_init(const MlpSpec& spec);

// Single-sample forward pass. train_mode enables dropout with the net's
// spec.dropout_rate, drawing masks from rng (required iff dropout active).
Vector forward(const Mlp& m, const Vector& x, bool train_mode = false, Rng* rng = nullptr);

// Batch forward pass, evaluation mode (no dropout).
Matrix forward_batch(const Mlp& m, const Matrix& X);

// --- training-level primitives (also used by the joint deconfounder) ---

struct ForwardCache {
    std::vector<Matrix> acts;   // acts[0] = input; acts[l+1] = layer-l output
    std::vector<Matrix> masks;  // inverted-dropout masks per hidden layer (train only)
};

// Forward pass keeping activations. dropout_rate applies to hidden layers
// only and only when train_mode is set.
const Matrix& forward_pass(const Mlp& m, const Matrix& X, ForwardCache& cache, bool train_mode,
                           double dropout_rate, Rng* rng);

struct Gradients {
    std::vector<Matrix> dW;
    std::vector<Vector> db;
    void scale(double c);
};

// Backward pass. d_out_pre is the loss gradient w.r.t. the output layer's
// pre-activation (for identity outputs this equals the gradient w.r.t. the
// output itself). Returns the gradient w.r.t. the input batch when
// want_input_grad is set, otherwise an empty matrix.
Matrix backward_pass(const Mlp& m, const ForwardCache& cache, const Matrix& d_out_pre,
                     Gradients& grads, bool want_input_grad);

// Loss value (mean per-example) and the matching d_out_pre for a total
// (summed) batch loss scaled by `grad_scale`.
double loss_value(Loss loss, const Matrix& pred, const Matrix& target);
Matrix loss_grad_pre(Loss loss, OutputActivation out_act, const Matrix& pred,
                     const Matrix& target);

// Analytic gradient of the total (summed) batch loss, dropout disabled.
Gradients gradient(const Mlp& m, const Matrix& X, const Matrix& Y, Loss loss);

struct AdamState {
    std::vector<Matrix> mW, vW;
    std::vector<Vector> mb, vb;
    long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit AdamState(const Mlp& m);
    void update(Mlp& m, const Gradients& g, double lr);
};

// Mini-batch Adam training. Batch order reshuffled each epoch with rng;
// dropout masks drawn from the same stream. Targets must be one column per
// output unit; logistic loss requires {0,1} targets and a logistic output.
// Exactly constant squared-loss targets short-circuit to an intercept-only
// net that reproduces the constant exactly.
Mlp train(Mlp m, const Matrix& X, const Matrix& Y, Loss loss, const TrainConfig& cfg, Rng& rng);

// Parameter checkpoint: little-endian binary, magic "SEQCIMLP", u32 version,
// u32 layer count in widths, i64 widths, u8 output activation, f64 dropout,
// u64 seed, then per layer the column-major weight block followed by the
// bias vector, all f64.
void save_checkpoint(const Mlp& m, const std::string& path);
Mlp load_checkpoint(const std::string& path);

}  // namespace seqci
