#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "phev/rng.hpp"

namespace phev {

enum class Activation { linear, relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct MlpGrads {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

/// Dense network with rectifier hidden layers and a configurable output head.
/// Batches are column-major: each column of the input is one sample.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> sizes, Activation output);

  // Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  void init(Rng& rng);

  // Caches activations for a following backward() call.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x);
  // No cache; safe on a const network.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;

  // Gradients of sum(upstream .* y) for the last forward() batch. When
  // input_grad is given it receives d/dx with the same layout as x.
  MlpGrads backward(const Eigen::MatrixXd& upstream, Eigen::MatrixXd* input_grad = nullptr) const;

  void soft_update_from(const Mlp& online, double tau);

  const std::vector<int>& sizes() const { return sizes_; }
  Activation output_activation() const { return output_; }
  std::size_t layers() const { return weights_.size(); }
  std::size_t parameter_count() const;
  // Flat parameter view (layer by layer, weights column-major then bias), for checks.
  double parameter(std::size_t k) const;
  void set_parameter(std::size_t k, double value);

  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  double* locate(std::size_t k);
  void check_input(const Eigen::MatrixXd& x) const;

  std::vector<int> sizes_;
  Activation output_ = Activation::linear;
  std::vector<Eigen::MatrixXd> weights_;  // out x in
  std::vector<Eigen::VectorXd> biases_;
  // Forward cache: inputs to each layer and the pre-activations.
  std::vector<Eigen::MatrixXd> inputs_;
  std::vector<Eigen::MatrixXd> pre_;
};

MlpGrads zero_grads(const Mlp& net);
void accumulate(MlpGrads& into, const MlpGrads& g);

class Adam {
 public:
  Adam() = default;
  explicit Adam(const Mlp& net, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // Gradient descent step. Throws naming the layer if a gradient is not finite;
  // parameters are untouched in that case.
  void step(Mlp& net, const MlpGrads& g);

  long long steps() const { return t_; }
  double learning_rate() const { return lr_; }

  nlohmann::json to_json() const;
  static Adam from_json(const nlohmann::json& j);

  friend bool operator==(const Adam& a, const Adam& b);

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long long t_ = 0;
  MlpGrads m_, v_;
};

}  // namespace phev
