#include "cist/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace cist {

std::vector<std::size_t> MlpParams::dims() const {
  std::vector<std::size_t> d;
  d.push_back(input_dim());
  for (const auto& layer : layers) d.push_back(layer.weight.rows());
  return d;
}

std::size_t MlpParams::param_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    n += layer.weight.rows() * layer.weight.cols() + layer.bias.size();
  }
  return n;
}

MlpParams init_mlp(std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) throw InvalidArgumentError("init_mlp: needs at least [in, out] dims");
  MlpParams params;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const std::size_t in = dims[k];
    const std::size_t out = dims[k + 1];
    if (in == 0 || out == 0) throw InvalidArgumentError("init_mlp: zero-width layer");
    LayerParams layer;
    layer.weight = Matrix(out, in);
    layer.bias.assign(out, 0.0);
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

Matrix mlp_forward(const MlpParams& params, const Matrix& inputs, ForwardCache* cache) {
  if (inputs.cols() != params.input_dim()) {
    throw ShapeError("mlp_forward: input width does not match first layer");
  }
  if (cache != nullptr) {
    cache->inputs.clear();
    cache->inputs.reserve(params.layers.size());
  }
  const std::size_t n = inputs.rows();
  Matrix act = inputs;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const LayerParams& layer = params.layers[k];
    const std::size_t in = layer.weight.cols();
    const std::size_t out = layer.weight.rows();
    if (act.cols() != in) throw ShapeError("mlp_forward: layer dimension chain broken");
    if (cache != nullptr) cache->inputs.push_back(act);

    Matrix next(n, out);
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = act.row(i).data();
      for (std::size_t o = 0; o < out; ++o) {
        const double* w = layer.weight.row(o).data();
        double s = layer.bias[o];
        for (std::size_t j = 0; j < in; ++j) s += w[j] * x[j];
        next(i, o) = s;
      }
    }
    const bool hidden = k + 1 < params.layers.size();
    if (hidden) {
      for (double& x : next.data()) x = x > 0.0 ? x : 0.0;
    }
    act = std::move(next);
  }
  return act;
}

MlpGrads mlp_backward(const MlpParams& params, const ForwardCache& cache,
                      const Matrix& output_grad) {
  if (cache.inputs.size() != params.layers.size()) {
    throw ShapeError("mlp_backward: cache does not match the parameter stack");
  }
  const std::size_t n = output_grad.rows();
  if (output_grad.cols() != params.output_dim() || cache.inputs[0].rows() != n) {
    throw ShapeError("mlp_backward: gradient shape does not match forward cache");
  }

  MlpGrads grads;
  grads.layers.resize(params.layers.size());
  Matrix delta = output_grad;
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const LayerParams& layer = params.layers[k];
    const Matrix& input = cache.inputs[k];
    const std::size_t in = layer.weight.cols();
    const std::size_t out = layer.weight.rows();
    if (input.cols() != in || delta.cols() != out) {
      throw ShapeError("mlp_backward: cache layer shape mismatch");
    }

    LayerParams& g = grads.layers[k];
    g.weight = Matrix(out, in);
    g.bias.assign(out, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = input.row(i).data();
      const double* d = delta.row(i).data();
      for (std::size_t o = 0; o < out; ++o) {
        g.bias[o] += d[o];
        double* gw = g.weight.row(o).data();
        const double dv = d[o];
        for (std::size_t j = 0; j < in; ++j) gw[j] += dv * x[j];
      }
    }

    if (k == 0) break;
    Matrix prev(n, in);
    for (std::size_t i = 0; i < n; ++i) {
      const double* d = delta.row(i).data();
      double* pd = prev.row(i).data();
      for (std::size_t j = 0; j < in; ++j) pd[j] = 0.0;
      for (std::size_t o = 0; o < out; ++o) {
        const double* w = layer.weight.row(o).data();
        const double dv = d[o];
        for (std::size_t j = 0; j < in; ++j) pd[j] += dv * w[j];
      }
      // ReLU mask: the cached input of layer k is layer (k-1)'s activation.
      const double* a = input.row(i).data();
      for (std::size_t j = 0; j < in; ++j) {
        if (!(a[j] > 0.0)) pd[j] = 0.0;
      }
    }
    delta = std::move(prev);
  }
  return grads;
}

double LrSchedule::at(int epoch) const {
  double lr = initial;
  for (int d : decay_epochs) {
    if (epoch >= d) lr *= decay_factor;
  }
  return lr;
}

OptimState OptimState::zeros_like(const MlpParams& params, double momentum,
                                  double weight_decay, LrSchedule schedule) {
  if (!(momentum >= 0.0) || !(momentum < 1.0)) {
    throw InvalidArgumentError("OptimState: momentum must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw InvalidArgumentError("OptimState: weight_decay < 0");
  if (!(schedule.initial > 0.0)) throw InvalidArgumentError("OptimState: learning rate <= 0");
  OptimState state;
  state.momentum = momentum;
  state.weight_decay = weight_decay;
  state.schedule = std::move(schedule);
  state.velocity.layers.resize(params.layers.size());
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    state.velocity.layers[k].weight =
        Matrix(params.layers[k].weight.rows(), params.layers[k].weight.cols());
    state.velocity.layers[k].bias.assign(params.layers[k].bias.size(), 0.0);
  }
  return state;
}

void sgd_step(MlpParams& params, const MlpGrads& grads, OptimState& state, int epoch) {
  if (grads.layers.size() != params.layers.size()) {
    throw ShapeError("sgd_step: gradient stack mismatch");
  }
  const double lr = state.schedule.at(epoch);
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto& p = params.layers[k];
    const auto& g = grads.layers[k];
    auto& v = state.velocity.layers[k];
    if (!p.weight.same_shape(g.weight) || p.bias.size() != g.bias.size()) {
      throw ShapeError("sgd_step: layer shape mismatch");
    }
    for (std::size_t idx = 0; idx < p.weight.data().size(); ++idx) {
      double& vel = v.weight.data()[idx];
      vel = state.momentum * vel + g.weight.data()[idx] +
            state.weight_decay * p.weight.data()[idx];
      p.weight.data()[idx] -= lr * vel;
    }
    for (std::size_t idx = 0; idx < p.bias.size(); ++idx) {
      double& vel = v.bias[idx];
      vel = state.momentum * vel + g.bias[idx] + state.weight_decay * p.bias[idx];
      p.bias[idx] -= lr * vel;
    }
  }
}

namespace {
constexpr char kMagic[8] = {'C', 'I', 'S', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError("checkpoint " + path.string() + ": truncated header");
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MlpParams& params,
                     const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("save_checkpoint: cannot open " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  const std::vector<std::size_t> dims = params.dims();
  write_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (std::size_t d : dims) write_u32(out, static_cast<std::uint32_t>(d));
  for (const auto& layer : params.layers) {
    out.write(reinterpret_cast<const char*>(layer.weight.data().data()),
              static_cast<std::streamsize>(layer.weight.data().size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(layer.bias.data()),
              static_cast<std::streamsize>(layer.bias.size() * sizeof(double)));
  }
  if (!out) throw FormatError("save_checkpoint: write failed for " + path.string());

  nlohmann::json j;
  j["epoch"] = meta.epoch;
  j["seed"] = meta.seed;
  j["config_hash"] = meta.config_hash;
  j["dims"] = dims;
  std::ofstream side(path.string() + ".meta.json");
  if (!side) throw FormatError("save_checkpoint: cannot open sidecar for " + path.string());
  side << j.dump(2) << "\n";
}

MlpParams load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_checkpoint: cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError("checkpoint " + path.string() + ": bad magic bytes");
  }
  const std::uint32_t version = read_u32(in, path);
  if (version != kVersion) {
    throw FormatError("checkpoint " + path.string() + ": unsupported version");
  }
  const std::uint32_t ndims = read_u32(in, path);
  if (ndims < 2 || ndims > 64) {
    throw FormatError("checkpoint " + path.string() + ": implausible dimension count");
  }
  std::vector<std::size_t> dims(ndims);
  for (auto& d : dims) {
    d = read_u32(in, path);
    if (d == 0) throw FormatError("checkpoint " + path.string() + ": zero-width layer");
  }

  MlpParams params;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    LayerParams layer;
    layer.weight = Matrix(dims[k + 1], dims[k]);
    layer.bias.assign(dims[k + 1], 0.0);
    if (!in.read(reinterpret_cast<char*>(layer.weight.data().data()),
                 static_cast<std::streamsize>(layer.weight.data().size() * sizeof(double))) ||
        !in.read(reinterpret_cast<char*>(layer.bias.data()),
                 static_cast<std::streamsize>(layer.bias.size() * sizeof(double)))) {
      throw FormatError("checkpoint " + path.string() + ": truncated parameter data");
    }
    params.layers.push_back(std::move(layer));
  }
  in.peek();
  if (!in.eof()) {
    throw FormatError("checkpoint " + path.string() + ": trailing bytes after parameters");
  }

  if (meta != nullptr) {
    std::ifstream side(path.string() + ".meta.json");
    if (side) {
      nlohmann::json j = nlohmann::json::parse(side, nullptr, false);
      if (!j.is_discarded()) {
        meta->epoch = j.value("epoch", 0);
        meta->seed = j.value("seed", std::uint64_t{0});
        meta->config_hash = j.value("config_hash", std::string());
      }
    }
  }
  return params;
}

}  // namespace cist
