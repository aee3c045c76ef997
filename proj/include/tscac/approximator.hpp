#pragma once

// Small multi-layer perceptron with explicit parameter vectors.
//
// Hidden layers use tanh. Parameters are stored layer by layer; each layer is
// a row-major (out x in) weight block followed by its bias vector. Gradients
// are computed analytically by backpropagation and are checked against
// central finite differences in the test suite.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tscac {

enum class OutputActivation { linear, softmax, tanh };

std::string_view to_string(OutputActivation a);
OutputActivation parse_output_activation(std::string_view s);

struct ApproxSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_layers;
  std::size_t output_dim = 1;
  OutputActivation output_activation = OutputActivation::linear;
  std::uint64_t seed = 0;

  std::size_t param_count() const;
  void validate() const;

  bool operator==(const ApproxSpec&) const = default;
};

class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}
  static ParamVector zeros(std::size_t n) { return ParamVector(std::vector<double>(n, 0.0)); }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool all_finite() const;
  // this += scale * other
  void add_scaled(const ParamVector& other, double scale);

  bool operator==(const ParamVector&) const = default;

 private:
  std::vector<double> values_;
};

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] from spec.seed; biases too.
ParamVector init_params(const ApproxSpec& spec);

std::vector<double> forward(const ApproxSpec& spec, const ParamVector& params,
                            std::span<const double> input);

// Where the upstream seed of a backward pass is applied.
enum class SeedPoint {
  output,          // upstream multiplies the activated output
  pre_activation,  // upstream multiplies the logits (skips the output activation)
};

struct Backward {
  ParamVector params;          // d(upstream . y)/d params
  std::vector<double> input;   // d(upstream . y)/d input
};

Backward backward(const ApproxSpec& spec, const ParamVector& params,
                  std::span<const double> input, std::span<const double> upstream,
                  SeedPoint seed_point = SeedPoint::output);

// d(upstream . forward(input))/d params.
ParamVector gradient(const ApproxSpec& spec, const ParamVector& params,
                     std::span<const double> input, std::span<const double> upstream);

// Numerically stable softmax / log-softmax helpers shared by the policies.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> logits(const ApproxSpec& spec, const ParamVector& params,
                           std::span<const double> input);

enum class Direction { minimize, maximize };

struct OptState {
  std::uint64_t step_count = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  double step_size = 1e-3;
  std::pair<double, double> moment_decays{0.9, 0.999};
  double epsilon = 1e-8;

  static OptState for_params(std::size_t n, double step_size = 1e-3);
};

// Adam step with bias correction. Throws NumericError (leaving params and
// state untouched) when grads contain non-finite entries.
void optimizer_step(ParamVector& params, const ParamVector& grads, OptState& opt,
                    Direction direction);

// Text form: header with the spec, then one value per line at 17 significant
// digits, which round-trips doubles exactly.
std::string serialize(const ApproxSpec& spec, const ParamVector& params);
std::pair<ApproxSpec, ParamVector> deserialize(std::string_view text);

}  // namespace tscac
