#include <catch2/catch_amalgamated.hpp>

#include "pggr/surrogate.hpp"

#include <cmath>

using namespace pggr;
using Catch::Approx;

namespace {

Mlp make_net(std::vector<int> enc, std::vector<int> head, uint64_t seed,
             Activation act = Activation::tanh) {
  Rng rng(seed);
  MlpShape shape{std::move(enc), std::move(head), act};
  return Mlp::make(shape, rng);
}

// central finite differences of the full training loss w.r.t. every parameter
double fd_check(Mlp net, const MatrixXd& X, const VectorXd& y) {
  const double eps = 1e-6;
  MlpGradients g = loss_and_grad(net, X, y);
  double worst = 0;
  auto probe = [&](double& param, double analytic) {
    double save = param;
    param = save + eps;
    double up = loss_and_grad(net, X, y).total_loss;
    param = save - eps;
    double dn = loss_and_grad(net, X, y).total_loss;
    param = save;
    double fd = (up - dn) / (2 * eps);
    double rel = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-8});
    worst = std::max(worst, rel);
  };
  for (int l = 0; l < net.n_layers(); ++l) {
    for (int j = 0; j < net.W[l].cols(); ++j)
      for (int i = 0; i < net.W[l].rows(); ++i) probe(net.W[l](i, j), g.dW[l](i, j));
    for (int i = 0; i < net.b[l].size(); ++i) probe(net.b[l][i], g.db[l][i]);
  }
  return worst;
}

}  // namespace

TEST_CASE("dataset stores, deduplicates and reports provenance") {
  Dataset d;
  VectorXd a(2), b(2);
  a << 1, 2;
  b << 1, 2 + 1e-12;
  REQUIRE(d.add(a, 10.0, 0));
  REQUIRE_FALSE(d.add(a, 11.0, 1));  // exact duplicate rejected
  REQUIRE(d.add(b, 12.0, 1));        // near-duplicate is a distinct point
  CHECK(d.size() == 2);
  CHECK(d.contains(a));
  CHECK(d.label(0) == 10.0);
  CHECK(d.stage(1) == 1);
  CHECK(d.inputs_matrix().cols() == 2);
  CHECK(d.labels_vector()[1] == 12.0);
}

TEST_CASE("gradients match finite differences for every shipped shape") {
  Rng rng(7);
  MatrixXd X = rng.normal_mat(3, 12);
  VectorXd y = rng.normal_vec(12);

  for (Activation act : {Activation::tanh, Activation::leaky_relu}) {
    INFO("activation " << activation_name(act));
    Mlp small = make_net({3, 5, 4}, {4, 6, 1}, 11, act);
    small.lambda = 0.13;
    CHECK(fd_check(small, X, y) < 1e-4);

    Mlp deep = make_net({3, 8, 4}, {4, 5, 5, 1}, 13, act);
    CHECK(fd_check(deep, X, y) < 1e-4);
  }

  MatrixXd X2 = rng.normal_mat(2, 10);
  VectorXd y2 = rng.normal_vec(10);
  Mlp fourmode = make_net({2, 20, 20}, {20, 1}, 17);
  fourmode.lambda = 0.02;
  CHECK(fd_check(fourmode, X2, y2) < 1e-4);
}

TEST_CASE("zero network predicts zero and its loss is the label second moment") {
  Mlp net = make_net({2, 4, 3}, {3, 1}, 3);
  for (auto& w : net.W) w.setZero();
  for (auto& b : net.b) b.setZero();
  MatrixXd X(2, 3);
  X << 1, 2, 3, 4, 5, 6;
  VectorXd y(3);
  y << 1, -2, 3;
  CHECK(net.predict(X).norm() == 0.0);
  MlpGradients g = loss_and_grad(net, X, y);
  CHECK(g.data_loss == Approx(y.squaredNorm() / 3.0).epsilon(1e-12));
  CHECK(g.grad_reg_norm == 0.0);
}

TEST_CASE("regularization weight tracks the gradient-balance target") {
  // fixed point: lambda* = ratio * |g_data| / |g_reg|
  double lam = 0.0;
  for (int i = 0; i < 2000; ++i) lam = update_lambda(10.0, 4.0, lam);
  CHECK(lam == Approx(0.05 * 10.0 / 4.0).epsilon(1e-6));

  // smoothing: one step moves 5% of the gap
  double l1 = update_lambda(10.0, 4.0, 0.0);
  CHECK(l1 == Approx(0.05 * (0.05 * 10.0 / 4.0)).epsilon(1e-12));

  // guard against zero regularizer gradient and runaway values
  CHECK(update_lambda(1.0, 0.0, 0.0) <= 1e3);
  CHECK(update_lambda(0.0, 1.0, 0.5) == Approx(0.95 * 0.5).epsilon(1e-12));
}

TEST_CASE("training fits an affine function to near machine precision") {
  Rng rng(21);
  MatrixXd X = rng.normal_mat(2, 64);
  VectorXd y = (1.5 * X.row(0) - 0.7 * X.row(1)).transpose().array() + 0.3;
  Mlp net = make_net({2, 16, 8}, {8, 1}, 5);
  TrainOptions opt;
  opt.iters = 8000;
  train(net, X, y, opt);
  VectorXd pred = net.predict(X);
  double rmse = std::sqrt((pred - y).squaredNorm() / 64.0);
  CHECK(rmse < 0.01);
}

TEST_CASE("freezing keeps the final encoder layer bit-identical") {
  Rng rng(9);
  MatrixXd X = rng.normal_mat(4, 32);
  VectorXd y = X.colwise().squaredNorm().transpose();
  Mlp net = make_net({4, 10, 6}, {6, 8, 1}, 27);
  MatrixXd w_before = net.W[1];
  VectorXd b_before = net.b[1];
  MatrixXd w0_before = net.W[0];

  TrainOptions opt;
  opt.iters = 500;
  opt.freeze_last_encoder = true;
  train(net, X, y, opt);

  CHECK(net.W[1] == w_before);  // frozen layer untouched, bitwise
  CHECK(net.b[1] == b_before);
  CHECK(net.W[0] != w0_before);  // other layers trained
}

TEST_CASE("frozen-layer training still reduces the loss") {
  Rng rng(33);
  MatrixXd X = rng.normal_mat(3, 40);
  VectorXd y = X.row(0).transpose().array().sin();
  Mlp net = make_net({3, 8, 5}, {5, 6, 1}, 15);
  TrainOptions opt;
  opt.iters = 2000;
  opt.freeze_last_encoder = true;
  TrainReport rep = train(net, X, y, opt);
  CHECK(rep.loss_last < rep.loss_first);
}

TEST_CASE("training is deterministic given identical inputs") {
  Rng rng(51);
  MatrixXd X = rng.normal_mat(2, 24);
  VectorXd y = X.row(0).transpose();
  Mlp n1 = make_net({2, 6, 4}, {4, 1}, 99);
  Mlp n2 = make_net({2, 6, 4}, {4, 1}, 99);
  TrainOptions opt;
  opt.iters = 300;
  train(n1, X, y, opt);
  train(n2, X, y, opt);
  for (int l = 0; l < n1.n_layers(); ++l) {
    REQUIRE(n1.W[l] == n2.W[l]);
    REQUIRE(n1.b[l] == n2.b[l]);
  }
  CHECK(n1.lambda == n2.lambda);
}

TEST_CASE("encoder output matches the prediction path prefix") {
  Mlp net = make_net({3, 7, 4}, {4, 5, 1}, 61);
  Rng rng(62);
  MatrixXd X = rng.normal_mat(3, 10);
  MatrixXd z = net.encode(X);
  REQUIRE(z.rows() == 4);
  std::vector<MatrixXd> acts;
  net.forward_batch(X, acts);
  CHECK(z == acts[net.n_enc]);
  CHECK(net.latent_dim() == 4);
}

TEST_CASE("leaky activation extrapolates linearly far from the data") {
  // a one-hidden-layer leaky-ReLU net is piecewise affine: scaling an input far
  // beyond the kink set scales the output affinely, unlike saturating tanh
  Mlp net = make_net({1, 4, 2}, {2, 1}, 71, Activation::leaky_relu);
  MatrixXd X(1, 3);
  X << 1e6, 2e6, 3e6;
  VectorXd p = net.predict(X);
  double rel = std::abs((p[2] - p[1]) - (p[1] - p[0])) /
               std::max(1.0, std::abs(p[1] - p[0]));
  CHECK(rel < 1e-9);

  Mlp sat = make_net({1, 4, 2}, {2, 1}, 71, Activation::tanh);
  VectorXd ps = sat.predict(X);
  CHECK(ps[2] == ps[1]);  // every tanh unit saturates exactly this far out
}

TEST_CASE("shape validation rejects inconsistent encoder and head widths") {
  Rng rng(1);
  CHECK_THROWS(Mlp::make({{3, 5}, {4, 1}}, rng));   // latent width mismatch
  CHECK_THROWS(Mlp::make({{3, 5}, {5, 2}}, rng));   // head must end in scalar
  CHECK_THROWS(Mlp::make({{3}, {3, 1}}, rng));      // encoder too small
  CHECK_THROWS(parse_activation("swish"));
  CHECK(parse_activation("tanh") == Activation::tanh);
  CHECK(std::string(activation_name(Activation::leaky_relu)) == "leaky_relu");
}
