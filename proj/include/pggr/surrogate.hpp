#pragma once

#include <unordered_map>

#include "pggr/common.hpp"
#include "pggr/rng.hpp"

namespace pggr {

// Labeled training pairs with provenance (0 = initial design, t = refinement
// stage). Exact-duplicate inputs are rejected to keep the set well-posed.
class Dataset {
 public:
  bool add(const VectorXd& x, double y, int stage) {
    uint64_t h = hash_vec(x);
    auto [it, inserted] = index_.try_emplace(h, std::vector<int>{});
    for (int i : it->second)
      if (xs_[i].size() == x.size() && xs_[i] == x) return false;
    it->second.push_back(int(xs_.size()));
    xs_.push_back(x);
    ys_.push_back(y);
    stages_.push_back(stage);
    return true;
  }

  bool contains(const VectorXd& x) const {
    auto it = index_.find(hash_vec(x));
    if (it == index_.end()) return false;
    for (int i : it->second)
      if (xs_[i].size() == x.size() && xs_[i] == x) return true;
    return false;
  }

  int size() const { return int(xs_.size()); }
  const VectorXd& input(int i) const { return xs_[i]; }
  double label(int i) const { return ys_[i]; }
  int stage(int i) const { return stages_[i]; }

  MatrixXd inputs_matrix() const {
    PGGR_REQUIRE(!xs_.empty(), "dataset empty");
    MatrixXd X(xs_[0].size(), xs_.size());
    for (size_t i = 0; i < xs_.size(); ++i) X.col(i) = xs_[i];
    return X;
  }
  VectorXd labels_vector() const {
    return Eigen::Map<const VectorXd>(ys_.data(), ys_.size());
  }

 private:
  static uint64_t hash_vec(const VectorXd& x) {
    return fnv1a64(std::string_view(reinterpret_cast<const char*>(x.data()),
                                    size_t(x.size()) * sizeof(double)));
  }
  std::vector<VectorXd> xs_;
  std::vector<double> ys_;
  std::vector<int> stages_;
  std::unordered_map<uint64_t, std::vector<int>> index_;
};

// Hidden-layer nonlinearity. Both choices keep the derivative recoverable
// from the activation value alone, which the backward pass relies on.
enum class Activation { tanh, leaky_relu };

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "leaky_relu") return Activation::leaky_relu;
  throw std::invalid_argument("pggr: unknown activation '" + s + "'");
}

inline const char* activation_name(Activation a) {
  return a == Activation::tanh ? "tanh" : "leaky_relu";
}

constexpr double kLeakySlope = 0.01;

struct MlpShape {
  std::vector<int> encoder;  // e.g. {d, 40, 10}; back() is the latent width
  std::vector<int> head;     // e.g. {10, 20, 20, 1}; front() must match latent
  Activation act = Activation::tanh;
};

// Small dense network: nonlinear hidden layers, linear output. The first n_enc
// weight layers form the encoder whose output is the latent representation.
struct Mlp {
  std::vector<int> widths;  // full chain of layer widths
  int n_enc = 0;            // number of encoder weight layers
  Activation act = Activation::tanh;
  std::vector<MatrixXd> W;
  std::vector<VectorXd> b;
  double lambda = 0.0;  // current L2 weight, adapted during training

  static MatrixXd activate(const MatrixXd& z, Activation act) {
    if (act == Activation::tanh) return z.array().tanh();
    return z.array().max(kLeakySlope * z.array());
  }

  // d(activation)/dz expressed through the activation value a = f(z).
  static MatrixXd activate_deriv(const MatrixXd& a, Activation act) {
    if (act == Activation::tanh) return 1.0 - a.array().square();
    return (a.array() > 0).select(MatrixXd::Ones(a.rows(), a.cols()),
                                  MatrixXd::Constant(a.rows(), a.cols(), kLeakySlope));
  }

  static Mlp make(const MlpShape& shape, Rng& rng) {
    PGGR_REQUIRE(shape.encoder.size() >= 2 && shape.head.size() >= 2, "mlp shape too small");
    PGGR_REQUIRE(shape.encoder.back() == shape.head.front(),
                 "encoder output width must match head input width");
    PGGR_REQUIRE(shape.head.back() == 1, "head must end in a scalar output");
    Mlp net;
    net.widths = shape.encoder;
    net.widths.insert(net.widths.end(), shape.head.begin() + 1, shape.head.end());
    net.n_enc = int(shape.encoder.size()) - 1;
    net.act = shape.act;
    for (size_t l = 0; l + 1 < net.widths.size(); ++l) {
      int fan_in = net.widths[l], fan_out = net.widths[l + 1];
      double a = std::sqrt(6.0 / double(fan_in + fan_out));
      MatrixXd w(fan_out, fan_in);
      for (int j = 0; j < fan_in; ++j)
        for (int i = 0; i < fan_out; ++i) w(i, j) = (2 * rng.uniform() - 1) * a;
      net.W.push_back(std::move(w));
      net.b.push_back(VectorXd::Zero(fan_out));
    }
    return net;
  }

  int n_layers() const { return int(W.size()); }
  int dim_in() const { return widths.front(); }
  int latent_dim() const { return widths[n_enc]; }

  // Activations per layer for a batch X (d x n); acts[0] = X, acts[l] = layer
  // l output after nonlinearity (last layer linear).
  void forward_batch(const MatrixXd& X, std::vector<MatrixXd>& acts) const {
    acts.resize(W.size() + 1);
    acts[0] = X;
    for (size_t l = 0; l < W.size(); ++l) {
      acts[l + 1] = (W[l] * acts[l]).colwise() + b[l];
      if (l + 1 < W.size()) acts[l + 1] = activate(acts[l + 1], act);
    }
  }

  VectorXd predict(const MatrixXd& X) const {
    std::vector<MatrixXd> acts;
    forward_batch(X, acts);
    return acts.back().row(0);
  }

  MatrixXd encode(const MatrixXd& X) const {
    MatrixXd a = X;
    for (int l = 0; l < n_enc; ++l) a = activate((W[l] * a).colwise() + b[l], act);
    return a;
  }

  double param_sq_norm() const {
    double s = 0;
    for (size_t l = 0; l < W.size(); ++l) s += W[l].squaredNorm() + b[l].squaredNorm();
    return s;
  }
};

struct MlpGradients {
  std::vector<MatrixXd> dW;
  std::vector<VectorXd> db;
  double data_loss = 0;      // mean squared error term
  double total_loss = 0;     // mse + lambda * ||theta||^2
  double grad_data_norm = 0; // norm of the mse gradient
  double grad_reg_norm = 0;  // norm of d/dtheta ||theta||^2 = 2*theta
};

// Full-batch loss and reverse-mode gradient of mse + lambda*||theta||^2.
inline MlpGradients loss_and_grad(const Mlp& net, const MatrixXd& X, const VectorXd& y) {
  PGGR_REQUIRE(X.cols() == y.size() && X.cols() > 0, "loss_and_grad batch mismatch");
  const int n = int(X.cols());
  std::vector<MatrixXd> acts;
  net.forward_batch(X, acts);

  MlpGradients g;
  g.dW.resize(net.W.size());
  g.db.resize(net.W.size());

  Eigen::RowVectorXd resid = acts.back().row(0) - y.transpose();
  g.data_loss = resid.squaredNorm() / n;
  g.total_loss = g.data_loss + net.lambda * net.param_sq_norm();

  MatrixXd delta = (2.0 / n) * resid;  // dLoss/dZ for the linear output layer
  double data_sq = 0, reg_sq = 0;
  for (int l = net.n_layers() - 1; l >= 0; --l) {
    g.dW[l] = delta * acts[l].transpose();
    g.db[l] = delta.rowwise().sum();
    data_sq += g.dW[l].squaredNorm() + g.db[l].squaredNorm();
    reg_sq += 4.0 * (net.W[l].squaredNorm() + net.b[l].squaredNorm());
    if (l > 0) {
      MatrixXd da = net.W[l].transpose() * delta;
      delta = da.array() * Mlp::activate_deriv(acts[l], net.act).array();
    }
    g.dW[l] += 2.0 * net.lambda * net.W[l];
    g.db[l] += 2.0 * net.lambda * net.b[l];
  }
  g.grad_data_norm = std::sqrt(data_sq);
  g.grad_reg_norm = std::sqrt(reg_sq);
  return g;
}

// Smoothed gradient-balancing rule for the L2 weight.
inline double update_lambda(double grad_data_norm, double grad_reg_norm, double lambda,
                            double ratio = 0.05, double alpha = 0.05) {
  PGGR_REQUIRE(grad_data_norm >= 0 && grad_reg_norm >= 0, "update_lambda norms");
  double target = ratio * grad_data_norm / std::max(grad_reg_norm, 1e-12);
  return std::clamp((1 - alpha) * lambda + alpha * target, 0.0, 1e3);
}

struct TrainOptions {
  int iters = 0;
  bool freeze_last_encoder = false;
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct TrainReport {
  double loss_first = 0, loss_last = 0;
  double lambda_final = 0;
};

// Full-batch Adam. The lambda weight is refreshed every step from the data and
// regularizer gradient norms. With freeze_last_encoder the final encoder layer
// receives zero updates (fine-tuning keeps the latent geometry stable).
inline TrainReport train(Mlp& net, const MatrixXd& X, const VectorXd& y,
                         const TrainOptions& opt) {
  PGGR_REQUIRE(X.cols() > 0, "train on empty data");
  std::vector<MatrixXd> mW(net.W.size()), vW(net.W.size());
  std::vector<VectorXd> mb(net.b.size()), vb(net.b.size());
  for (size_t l = 0; l < net.W.size(); ++l) {
    mW[l] = MatrixXd::Zero(net.W[l].rows(), net.W[l].cols());
    vW[l] = mW[l];
    mb[l] = VectorXd::Zero(net.b[l].size());
    vb[l] = mb[l];
  }
  const int frozen = opt.freeze_last_encoder ? net.n_enc - 1 : -1;
  TrainReport rep;
  for (int t = 1; t <= opt.iters; ++t) {
    MlpGradients g = loss_and_grad(net, X, y);
    if (t == 1) rep.loss_first = g.total_loss;
    rep.loss_last = g.total_loss;
    PGGR_REQUIRE(std::isfinite(g.total_loss),
                 strfmt("training diverged (non-finite loss at step %d); "
                        "consider a smaller learning rate", t));
    double bc1 = 1 - std::pow(opt.beta1, t), bc2 = 1 - std::pow(opt.beta2, t);
    for (int l = 0; l < net.n_layers(); ++l) {
      if (l == frozen) continue;
      mW[l] = opt.beta1 * mW[l] + (1 - opt.beta1) * g.dW[l];
      vW[l] = opt.beta2 * vW[l].array().matrix() +
              (1 - opt.beta2) * g.dW[l].array().square().matrix();
      net.W[l].array() -= opt.lr * (mW[l].array() / bc1) /
                          ((vW[l].array() / bc2).sqrt() + opt.eps);
      mb[l] = opt.beta1 * mb[l] + (1 - opt.beta1) * g.db[l];
      vb[l] = opt.beta2 * vb[l].array().matrix() +
              (1 - opt.beta2) * g.db[l].array().square().matrix();
      net.b[l].array() -= opt.lr * (mb[l].array() / bc1) /
                          ((vb[l].array() / bc2).sqrt() + opt.eps);
    }
    net.lambda = update_lambda(g.grad_data_norm, g.grad_reg_norm, net.lambda);
  }
  rep.lambda_final = net.lambda;
  return rep;
}

}  // namespace pggr
