#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cist/matrix.hpp"
#include "cist/rng.hpp"

namespace cist {

// One dense layer: W is out x in, b has length out.
struct LayerParams {
  Matrix weight;
  std::vector<double> bias;
};

// Fully-connected net with ReLU hidden layers and an identity output layer.
struct MlpParams {
  std::vector<LayerParams> layers;

  std::size_t input_dim() const { return layers.front().weight.cols(); }
  std::size_t output_dim() const { return layers.back().weight.rows(); }
  std::vector<std::size_t> dims() const;  // [in, hidden..., out]
  std::size_t param_count() const;
};

// Glorot-uniform weights, zero biases. dims = [in, hidden..., out].
MlpParams init_mlp(std::span<const std::size_t> dims, Rng& rng);

// Activations entering each layer; sufficient for an exact backward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;  // inputs[k] feeds layer k; size = #layers
};

Matrix mlp_forward(const MlpParams& params, const Matrix& inputs,
                   ForwardCache* cache = nullptr);

using MlpGrads = MlpParams;  // same shapes as the parameters

// Exact gradients of the scalar loss whose logit gradient is output_grad.
MlpGrads mlp_backward(const MlpParams& params, const ForwardCache& cache,
                      const Matrix& output_grad);

struct LrSchedule {
  double initial = 0.05;
  double decay_factor = 0.1;
  std::vector<int> decay_epochs;  // multiplicative decay applies from each epoch on

  double at(int epoch) const;
};

struct OptimState {
  MlpGrads velocity;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  LrSchedule schedule;

  static OptimState zeros_like(const MlpParams& params, double momentum, double weight_decay,
                               LrSchedule schedule);
};

// v <- momentum*v + grad + weight_decay*param; param <- param - lr(epoch)*v.
void sgd_step(MlpParams& params, const MlpGrads& grads, OptimState& state, int epoch);

struct CheckpointMeta {
  int epoch = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

// Flat binary container: magic "CISTCKPT", u32 version, u32 dim count, u32
// dims, then row-major little-endian float64 parameters (W then b per layer).
// A human-readable JSON sidecar lands at <path>.meta.json.
void save_checkpoint(const std::filesystem::path& path, const MlpParams& params,
                     const CheckpointMeta& meta);
MlpParams load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace cist
