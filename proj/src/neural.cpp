#include "phev/neural.hpp"

#include <cmath>

#include <fmt/format.h>

namespace phev {

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ShapeError("matrix data does not match its shape");
  Eigen::MatrixXd m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const Eigen::MatrixXd m = matrix_from_json(j);
  if (m.cols() != 1) throw ShapeError("expected a column vector");
  return m.col(0);
}

Eigen::MatrixXd apply(Activation a, const Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::linear: break;
  }
  return z;
}

// d activation / dz given the pre-activation z.
Eigen::MatrixXd derivative(Activation a, const Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::relu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::tanh: return (1.0 - z.array().tanh().square()).matrix();
    case Activation::linear: break;
  }
  return Eigen::MatrixXd::Ones(z.rows(), z.cols());
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "linear";
}

Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ShapeError(fmt::format("unknown activation '{}'", s));
}

Mlp::Mlp(std::vector<int> sizes, Activation output) : sizes_(std::move(sizes)), output_(output) {
  if (sizes_.size() < 2) throw ShapeError("a network needs at least an input and an output layer");
  for (int s : sizes_) {
    if (s <= 0) throw ShapeError("layer sizes must be positive");
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    weights_.emplace_back(Eigen::MatrixXd::Zero(sizes_[l + 1], sizes_[l]));
    biases_.emplace_back(Eigen::VectorXd::Zero(sizes_[l + 1]));
  }
}

void Mlp::init(Rng& rng) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(weights_[l].cols()));
    for (Eigen::Index k = 0; k < weights_[l].size(); ++k) weights_[l].data()[k] = rng.uniform(-limit, limit);
    for (Eigen::Index k = 0; k < biases_[l].size(); ++k) biases_[l][k] = rng.uniform(-limit, limit);
  }
}

void Mlp::check_input(const Eigen::MatrixXd& x) const {
  if (weights_.empty()) throw ShapeError("network has no layers");
  if (x.rows() != sizes_.front()) {
    throw ShapeError(fmt::format("input has {} rows, network expects {}", x.rows(), sizes_.front()));
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) {
  check_input(x);
  inputs_.resize(weights_.size());
  pre_.resize(weights_.size());
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    inputs_[l] = a;
    pre_[l].noalias() = weights_[l] * a;
    pre_[l].colwise() += biases_[l];
    a = apply(l + 1 == weights_.size() ? output_ : Activation::relu, pre_[l]);
  }
  return a;
}

Eigen::MatrixXd Mlp::predict(const Eigen::MatrixXd& x) const {
  check_input(x);
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd z = weights_[l] * a;
    z.colwise() += biases_[l];
    a = apply(l + 1 == weights_.size() ? output_ : Activation::relu, z);
  }
  return a;
}

MlpGrads Mlp::backward(const Eigen::MatrixXd& upstream, Eigen::MatrixXd* input_grad) const {
  if (inputs_.size() != weights_.size()) throw ShapeError("backward() needs a preceding forward()");
  if (upstream.rows() != sizes_.back() || upstream.cols() != pre_.back().cols()) {
    throw ShapeError(fmt::format("upstream gradient is {}x{}, expected {}x{}", upstream.rows(), upstream.cols(),
                                 sizes_.back(), pre_.back().cols()));
  }
  MlpGrads g;
  g.weights.resize(weights_.size());
  g.biases.resize(weights_.size());
  Eigen::MatrixXd delta = upstream.cwiseProduct(derivative(output_, pre_.back()));
  for (std::size_t l = weights_.size(); l-- > 0;) {
    g.weights[l].noalias() = delta * inputs_[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l > 0 || input_grad) {
      Eigen::MatrixXd back = weights_[l].transpose() * delta;
      if (l > 0) {
        delta = back.cwiseProduct(derivative(Activation::relu, pre_[l - 1]));
      } else {
        *input_grad = std::move(back);
      }
    }
  }
  return g;
}

void Mlp::soft_update_from(const Mlp& online, double tau) {
  if (online.sizes_ != sizes_) throw ShapeError("soft update between networks of different shape");
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    weights_[l] = tau * online.weights_[l] + (1.0 - tau) * weights_[l];
    biases_[l] = tau * online.biases_[l] + (1.0 - tau) * biases_[l];
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
  return n;
}

double* Mlp::locate(std::size_t k) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const auto nw = static_cast<std::size_t>(weights_[l].size());
    if (k < nw) return weights_[l].data() + k;
    k -= nw;
    const auto nb = static_cast<std::size_t>(biases_[l].size());
    if (k < nb) return biases_[l].data() + k;
    k -= nb;
  }
  throw std::out_of_range("parameter index out of range");
}

double Mlp::parameter(std::size_t k) const { return *const_cast<Mlp*>(this)->locate(k); }
void Mlp::set_parameter(std::size_t k, double value) { *locate(k) = value; }

nlohmann::json Mlp::to_json() const {
  nlohmann::json j;
  j["sizes"] = sizes_;
  j["output"] = to_string(output_);
  j["layers"] = nlohmann::json::array();
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    j["layers"].push_back({{"weight", matrix_to_json(weights_[l])}, {"bias", matrix_to_json(biases_[l])}});
  }
  return j;
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  Mlp net(j.at("sizes").get<std::vector<int>>(), activation_from_string(j.at("output").get<std::string>()));
  const auto& layers = j.at("layers");
  if (layers.size() != net.weights_.size()) throw ShapeError("layer count does not match sizes");
  for (std::size_t l = 0; l < net.weights_.size(); ++l) {
    auto w = matrix_from_json(layers[l].at("weight"));
    auto b = vector_from_json(layers[l].at("bias"));
    if (w.rows() != net.weights_[l].rows() || w.cols() != net.weights_[l].cols() || b.size() != net.biases_[l].size()) {
      throw ShapeError(fmt::format("layer {} shape does not match sizes", l));
    }
    net.weights_[l] = std::move(w);
    net.biases_[l] = std::move(b);
  }
  return net;
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.sizes_ != b.sizes_ || a.output_ != b.output_) return false;
  for (std::size_t l = 0; l < a.weights_.size(); ++l) {
    if (a.weights_[l] != b.weights_[l] || a.biases_[l] != b.biases_[l]) return false;
  }
  return true;
}

MlpGrads zero_grads(const Mlp& net) {
  MlpGrads g;
  for (std::size_t l = 0; l < net.layers(); ++l) {
    g.weights.emplace_back(Eigen::MatrixXd::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
    g.biases.emplace_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
  }
  return g;
}

void accumulate(MlpGrads& into, const MlpGrads& g) {
  for (std::size_t l = 0; l < into.weights.size(); ++l) {
    into.weights[l] += g.weights[l];
    into.biases[l] += g.biases[l];
  }
}

Adam::Adam(const Mlp& net, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(zero_grads(net)), v_(zero_grads(net)) {}

void Adam::step(Mlp& net, const MlpGrads& g) {
  if (g.weights.size() != m_.weights.size()) throw ShapeError("gradient layer count does not match optimizer");
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    if (g.weights[l].rows() != m_.weights[l].rows() || g.weights[l].cols() != m_.weights[l].cols() ||
        g.biases[l].size() != m_.biases[l].size()) {
      throw ShapeError(fmt::format("gradient shape mismatch in layer {}", l));
    }
    if (!g.weights[l].allFinite() || !g.biases[l].allFinite()) {
      throw std::domain_error(fmt::format("non-finite gradient in layer {}", l));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update = [&](auto& param, auto& m, auto& v, const auto& grad) {
    m = beta1_ * m + (1.0 - beta1_) * grad;
    v = beta2_ * v + (1.0 - beta2_) * grad.cwiseProduct(grad);
    param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    update(net.weights()[l], m_.weights[l], v_.weights[l], g.weights[l]);
    update(net.biases()[l], m_.biases[l], v_.biases[l], g.biases[l]);
  }
}

nlohmann::json Adam::to_json() const {
  nlohmann::json j{{"lr", lr_}, {"beta1", beta1_}, {"beta2", beta2_}, {"eps", eps_}, {"t", t_}};
  j["m"] = nlohmann::json::array();
  j["v"] = nlohmann::json::array();
  for (std::size_t l = 0; l < m_.weights.size(); ++l) {
    j["m"].push_back({{"weight", matrix_to_json(m_.weights[l])}, {"bias", matrix_to_json(m_.biases[l])}});
    j["v"].push_back({{"weight", matrix_to_json(v_.weights[l])}, {"bias", matrix_to_json(v_.biases[l])}});
  }
  return j;
}

Adam Adam::from_json(const nlohmann::json& j) {
  Adam a;
  a.lr_ = j.at("lr").get<double>();
  a.beta1_ = j.at("beta1").get<double>();
  a.beta2_ = j.at("beta2").get<double>();
  a.eps_ = j.at("eps").get<double>();
  a.t_ = j.at("t").get<long long>();
  for (const auto& layer : j.at("m")) {
    a.m_.weights.push_back(matrix_from_json(layer.at("weight")));
    a.m_.biases.push_back(vector_from_json(layer.at("bias")));
  }
  for (const auto& layer : j.at("v")) {
    a.v_.weights.push_back(matrix_from_json(layer.at("weight")));
    a.v_.biases.push_back(vector_from_json(layer.at("bias")));
  }
  return a;
}

bool operator==(const Adam& a, const Adam& b) {
  if (a.lr_ != b.lr_ || a.t_ != b.t_ || a.m_.weights.size() != b.m_.weights.size()) return false;
  for (std::size_t l = 0; l < a.m_.weights.size(); ++l) {
    if (a.m_.weights[l] != b.m_.weights[l] || a.m_.biases[l] != b.m_.biases[l] || a.v_.weights[l] != b.v_.weights[l] ||
        a.v_.biases[l] != b.v_.biases[l]) {
      return false;
    }
  }
  return true;
}

}  // namespace phev
