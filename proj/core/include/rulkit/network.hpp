#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rulkit/parameter_set.hpp"
#include "rulkit/rng.hpp"
#include "rulkit/tensor.hpp"

namespace rulkit {

enum class Activation { None, ReLU, Tanh, Sigmoid };

enum class LayerKind { Dense, Conv1D, LSTM, GRU, BiLSTM };

// One stage of the sequence stack. Dense is applied per time step; Conv1D is
// valid-padded over time with a fused ReLU; the recurrent kinds scan time.
struct LayerDesc {
    LayerKind kind = LayerKind::Dense;
    int units = 0;                        // output features (per direction)
    int kernel = 0;                       // Conv1D only
    Activation act = Activation::None;    // Dense only
};

// How the head consumes the final layer's sequence output.
enum class Readout {
    LastState,  // final hidden state (fwd final + bwd final for BiLSTM)
    Flatten,    // all time steps concatenated (conv stacks)
};

// A fixed-topology sequence regressor: layer stack, readout, scalar dense
// head. Owns its parameters; all math helpers treat the network as const.
struct Network {
    int seq_len = 0;    // T
    int input_dim = 0;  // features per step
    std::vector<LayerDesc> layers;
    Readout readout = Readout::LastState;
    ParameterSet params;

    // Derived when built:
    int head_in = 0;                 // features entering the head
    std::vector<int> step_features;  // features after each layer
    std::vector<int> step_lengths;   // T after each layer (conv shrinks it)
};

// Builds the network and initializes every parameter array from `seed`,
// uniform on [-s, +s] with s = 1/sqrt(fan_in) (recurrent layers use the
// hidden size as fan-in for all of w/u/b). Draws happen in parameter
// insertion order, so a given topology+seed always yields identical bits.
Network make_network(int seq_len, int input_dim, std::vector<LayerDesc> layers,
                     Readout readout, std::uint64_t seed);

// Single-window prediction. `window` must be [seq_len x input_dim] and finite.
double forward(const Network& net, const Tensor& window);

// Batched prediction used by the training loop; windows[i] points at a
// row-major seq_len*input_dim buffer.
std::vector<double> forward_batch(const Network& net, std::span<const double* const> windows);

// Mean of (pred - label)^2.
double mse_loss(std::span<const double> preds, std::span<const double> labels);

// Reverse-mode sweep of the per-sample objective J = (forward(X) - y)^2.
GradientBundle gradients(const Network& net, const Tensor& window, double label);

// Same sweep for a batch objective J = mean_i (forward(X_i) - y_i)^2.
// Returns J; fills `grads` (layout of net.params). Input gradients are not
// produced on this path.
double batch_loss_grad(const Network& net, std::span<const double* const> windows,
                       std::span<const double> labels, ParameterSet& grads);

std::string layer_summary(const Network& net);

}  // namespace rulkit
