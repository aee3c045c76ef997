#include "tscac/approximator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "tscac/errors.hpp"
#include "tscac/seeding.hpp"

namespace tscac {

namespace {

std::vector<std::size_t> layer_sizes(const ApproxSpec& spec) {
  std::vector<std::size_t> sizes;
  sizes.reserve(spec.hidden_layers.size() + 2);
  sizes.push_back(spec.input_dim);
  sizes.insert(sizes.end(), spec.hidden_layers.begin(), spec.hidden_layers.end());
  sizes.push_back(spec.output_dim);
  return sizes;
}

void check_input(const ApproxSpec& spec, const ParamVector& params,
                 std::span<const double> input) {
  if (params.size() != spec.param_count()) {
    throw DimensionError("parameter vector has " + std::to_string(params.size()) +
                         " entries, spec requires " + std::to_string(spec.param_count()));
  }
  if (input.size() != spec.input_dim) {
    throw DimensionError("input has length " + std::to_string(input.size()) +
                         ", spec input_dim is " + std::to_string(spec.input_dim));
  }
  for (double x : input) {
    if (!std::isfinite(x)) throw NumericError("non-finite approximator input");
  }
}

// Activations of every layer; acts[0] is the input, acts.back() the logits
// (pre output activation).
struct Trace {
  std::vector<std::vector<double>> acts;
};

Trace run_forward(const ApproxSpec& spec, const ParamVector& params,
                  std::span<const double> input) {
  const auto sizes = layer_sizes(spec);
  Trace trace;
  trace.acts.reserve(sizes.size());
  trace.acts.emplace_back(input.begin(), input.end());
  const double* p = params.values().data();
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t in = sizes[l];
    const std::size_t out = sizes[l + 1];
    const auto& prev = trace.acts.back();
    std::vector<double> z(out);
    const double* w = p;
    const double* b = p + in * out;
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * prev[i];
      z[o] = acc;
    }
    p += in * out + out;
    const bool hidden = l + 2 < sizes.size();
    if (hidden) {
      for (double& v : z) v = std::tanh(v);
    }
    trace.acts.push_back(std::move(z));
  }
  return trace;
}

std::vector<double> activate(OutputActivation act, std::vector<double> z) {
  switch (act) {
    case OutputActivation::linear:
      return z;
    case OutputActivation::tanh:
      for (double& v : z) v = std::tanh(v);
      return z;
    case OutputActivation::softmax:
      return softmax(z);
  }
  return z;
}

}  // namespace

std::string_view to_string(OutputActivation a) {
  switch (a) {
    case OutputActivation::linear:
      return "linear";
    case OutputActivation::softmax:
      return "softmax";
    case OutputActivation::tanh:
      return "tanh";
  }
  return "linear";
}

OutputActivation parse_output_activation(std::string_view s) {
  if (s == "linear") return OutputActivation::linear;
  if (s == "softmax") return OutputActivation::softmax;
  if (s == "tanh") return OutputActivation::tanh;
  throw InvalidArgument("unknown output activation '" + std::string(s) + "'");
}

std::size_t ApproxSpec::param_count() const {
  const auto sizes = layer_sizes(*this);
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l] * sizes[l + 1] + sizes[l + 1];
  return n;
}

void ApproxSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) {
    throw InvalidArgument("approximator dimensions must be >= 1");
  }
  for (std::size_t h : hidden_layers) {
    if (h == 0) throw InvalidArgument("hidden layer widths must be >= 1");
  }
}

bool ParamVector::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void ParamVector::add_scaled(const ParamVector& other, double scale) {
  if (other.size() != size()) throw DimensionError("add_scaled: size mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += scale * other.values_[i];
}

ParamVector init_params(const ApproxSpec& spec) {
  spec.validate();
  const auto sizes = layer_sizes(spec);
  Rng rng = make_rng(spec.seed);
  std::vector<double> values;
  values.reserve(spec.param_count());
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t n = sizes[l] * sizes[l + 1] + sizes[l + 1];
    for (std::size_t k = 0; k < n; ++k) values.push_back(dist(rng));
  }
  return ParamVector(std::move(values));
}

std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> out(z.begin(), z.end());
  if (out.empty()) return out;
  const double mx = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

std::vector<double> logits(const ApproxSpec& spec, const ParamVector& params,
                           std::span<const double> input) {
  check_input(spec, params, input);
  return std::move(run_forward(spec, params, input).acts.back());
}

std::vector<double> forward(const ApproxSpec& spec, const ParamVector& params,
                            std::span<const double> input) {
  return activate(spec.output_activation, logits(spec, params, input));
}

Backward backward(const ApproxSpec& spec, const ParamVector& params,
                  std::span<const double> input, std::span<const double> upstream,
                  SeedPoint seed_point) {
  check_input(spec, params, input);
  if (upstream.size() != spec.output_dim) {
    throw DimensionError("upstream has length " + std::to_string(upstream.size()) +
                         ", spec output_dim is " + std::to_string(spec.output_dim));
  }
  const auto sizes = layer_sizes(spec);
  const Trace trace = run_forward(spec, params, input);

  std::vector<double> delta(upstream.begin(), upstream.end());
  if (seed_point == SeedPoint::output) {
    const auto& z = trace.acts.back();
    switch (spec.output_activation) {
      case OutputActivation::linear:
        break;
      case OutputActivation::tanh:
        for (std::size_t o = 0; o < z.size(); ++o) {
          const double t = std::tanh(z[o]);
          delta[o] *= 1.0 - t * t;
        }
        break;
      case OutputActivation::softmax: {
        const auto y = softmax(z);
        double dot = 0.0;
        for (std::size_t o = 0; o < y.size(); ++o) dot += y[o] * delta[o];
        for (std::size_t o = 0; o < y.size(); ++o) delta[o] = y[o] * (delta[o] - dot);
        break;
      }
    }
  }

  Backward out{ParamVector::zeros(params.size()), {}};
  // Offsets of each layer's parameter block.
  std::vector<std::size_t> offsets(sizes.size() - 1);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    offsets[l] = off;
    off += sizes[l] * sizes[l + 1] + sizes[l + 1];
  }

  for (std::size_t l = sizes.size() - 1; l-- > 0;) {
    const std::size_t in = sizes[l];
    const std::size_t outn = sizes[l + 1];
    const auto& prev = trace.acts[l];
    const double* w = params.values().data() + offsets[l];
    double* gw = out.params.values().data() + offsets[l];
    double* gb = gw + in * outn;
    for (std::size_t o = 0; o < outn; ++o) {
      const double d = delta[o];
      gb[o] = d;
      double* row = gw + o * in;
      for (std::size_t i = 0; i < in; ++i) row[i] = d * prev[i];
    }
    std::vector<double> next(in, 0.0);
    for (std::size_t o = 0; o < outn; ++o) {
      const double d = delta[o];
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) next[i] += row[i] * d;
    }
    if (l > 0) {
      // prev holds tanh activations of a hidden layer
      for (std::size_t i = 0; i < in; ++i) next[i] *= 1.0 - prev[i] * prev[i];
    }
    delta = std::move(next);
  }
  out.input = std::move(delta);
  return out;
}

ParamVector gradient(const ApproxSpec& spec, const ParamVector& params,
                     std::span<const double> input, std::span<const double> upstream) {
  return backward(spec, params, input, upstream, SeedPoint::output).params;
}

OptState OptState::for_params(std::size_t n, double step_size) {
  OptState s;
  s.first_moment.assign(n, 0.0);
  s.second_moment.assign(n, 0.0);
  s.step_size = step_size;
  return s;
}

void optimizer_step(ParamVector& params, const ParamVector& grads, OptState& opt,
                    Direction direction) {
  const std::size_t n = params.size();
  if (grads.size() != n || opt.first_moment.size() != n || opt.second_moment.size() != n) {
    throw DimensionError("optimizer_step: parameter, gradient and moment sizes disagree");
  }
  if (!grads.all_finite()) throw NumericError("optimizer_step: non-finite gradient");
  const auto [b1, b2] = opt.moment_decays;
  opt.step_count += 1;
  const double t = static_cast<double>(opt.step_count);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  const double sign = direction == Direction::maximize ? -1.0 : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = sign * grads[i];
    opt.first_moment[i] = b1 * opt.first_moment[i] + (1.0 - b1) * g;
    opt.second_moment[i] = b2 * opt.second_moment[i] + (1.0 - b2) * g * g;
    const double mhat = opt.first_moment[i] / c1;
    const double vhat = opt.second_moment[i] / c2;
    params[i] -= opt.step_size * mhat / (std::sqrt(vhat) + opt.epsilon);
  }
}

std::string serialize(const ApproxSpec& spec, const ParamVector& params) {
  if (params.size() != spec.param_count()) {
    throw DimensionError("serialize: params inconsistent with spec");
  }
  std::ostringstream os;
  os << "tscac-approx 1\n";
  os << "input_dim " << spec.input_dim << "\n";
  os << "hidden";
  for (std::size_t h : spec.hidden_layers) os << ' ' << h;
  os << "\n";
  os << "output_dim " << spec.output_dim << "\n";
  os << "output_activation " << to_string(spec.output_activation) << "\n";
  os << "seed " << spec.seed << "\n";
  os << "params " << params.size() << "\n";
  char buf[40];
  for (double v : params.values()) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    os << buf;
  }
  return os.str();
}

std::pair<ApproxSpec, ParamVector> deserialize(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  auto next_line = [&](std::string_view key) {
    if (!std::getline(is, line)) {
      throw IoError("approximator text truncated before '" + std::string(key) + "'");
    }
    if (line.rfind(key, 0) != 0) {
      throw IoError("expected '" + std::string(key) + "', got '" + line + "'");
    }
    return line.substr(key.size());
  };
  if (next_line("tscac-approx") != " 1") throw IoError("unsupported approximator format version");
  ApproxSpec spec;
  spec.input_dim = std::stoull(next_line("input_dim "));
  {
    std::istringstream hs(next_line("hidden"));
    std::size_t h;
    while (hs >> h) spec.hidden_layers.push_back(h);
  }
  spec.output_dim = std::stoull(next_line("output_dim "));
  spec.output_activation = parse_output_activation(next_line("output_activation "));
  spec.seed = std::stoull(next_line("seed "));
  spec.validate();
  const std::size_t n = std::stoull(next_line("params "));
  if (n != spec.param_count()) throw IoError("parameter count disagrees with spec");
  std::vector<double> values;
  values.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw IoError("approximator text truncated in parameters");
    char* end = nullptr;
    const double v = std::strtod(line.c_str(), &end);
    if (end == line.c_str() || *end != '\0') throw IoError("malformed parameter '" + line + "'");
    values.push_back(v);
  }
  return {std::move(spec), ParamVector(std::move(values))};
}

}  // namespace tscac
