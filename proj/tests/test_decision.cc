#include "milsed/decision.h"
#include "milsed/model.h"

#include "oracles.h"

#include <doctest.h>

#include <cmath>

using namespace milsed;
using testutil::random_matrix;

TEST_CASE("clip classifier examples") {
  LinearClassifier<double> zero{Vector::Zero(3), 0.0};
  CHECK(clip_probability(zero, Vector::Constant(3, 7.0)) == 0.5);

  LinearClassifier<double> g{Vector::Ones(2), 0.0};
  const double h = std::log(3.0) / 2;
  CHECK(clip_probability(g, Vector::Constant(2, h)) == doctest::Approx(0.75).epsilon(1e-12));

  LinearClassifier<double> neg{Vector::Ones(1), -10.0};
  CHECK(clip_probability(neg, Vector::Zero(1)) == doctest::Approx(4.5397868702434395e-05));
  CHECK_THROWS_AS(clip_probability(g, Vector::Zero(3)), ShapeError);
}

TEST_CASE("shared frame probabilities") {
  std::mt19937_64 rng(2);
  const Matrix reps = random_matrix(3, 4, rng);
  LinearClassifier<double> g{random_matrix(4, 1, rng).col(0), 0.25};
  const Vector p = frame_probs_shared(g, reps);
  for (Index t = 0; t < 3; ++t) {
    double z = 0.25;
    for (Index j = 0; j < 4; ++j) z += g.weight(j) * reps(t, j);
    CHECK(p(t) == doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-14));
  }
  LinearClassifier<double> zero{Vector::Zero(4), 0.0};
  CHECK((frame_probs_shared(zero, reps).array() == 0.5).all());

  // The surface applied to a pooled h gives exactly the clip probability.
  const Vector h = reps.colwise().mean().transpose();
  Matrix one(1, 4);
  one.row(0) = h.transpose();
  CHECK(frame_probs_shared(g, one)(0) == clip_probability(g, h));
}

TEST_CASE("specialized decision surface") {
  const PoolingSpec atp = PoolingSpec::parse("eatp");
  Matrix x(2, 2);
  x << 1, 7, 0, 3;
  Vector w(2);
  w << 2, 0;
  const Vector s = frame_probs_sds(atp, w, x);
  CHECK(std::abs(s(0) - 0.8807970779778823) <= 1e-12);
  CHECK(s(1) == 0.5);  // w . x = 0
  CHECK((frame_probs_sds(atp, Vector(Vector::Zero(2)), x).array() == 0.5).all());
  CHECK(std::abs(frame_probs_sds(atp, w, x, true)(0) - 1.0 / (1.0 + std::exp(-1.0))) <= 1e-12);
  try {
    frame_probs_sds(PoolingSpec::parse("egap"), w, x);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("SDS requires attention parameters") != std::string::npos);
  }
}

TEST_CASE("prediction rule") {
  RowVector probs(2);
  probs << 0.5, 0.2;
  const ClipPrediction clip = predict_clip(probs);
  CHECK(clip.labels(0));  // inclusive at alpha
  CHECK_FALSE(clip.labels(1));

  Matrix frames(2, 2);
  frames << 0.6, 0.99, 0.4, 0.99;
  const FramePrediction f = predict(clip, frames);
  CHECK(f.labels(0, 0));
  CHECK_FALSE(f.labels(1, 0));
  CHECK_FALSE(f.labels(0, 1));  // gated by the clip decision
  CHECK_FALSE(f.labels(1, 1));

  CHECK_THROWS_AS(predict(clip, Matrix::Zero(2, 3)), ShapeError);
  CHECK_THROWS_AS(predict(clip, frames, 1.5), Error);
  CHECK_THROWS_AS(predict_clip(probs, 0.0), Error);
}

TEST_CASE("gating and gamma monotonicity") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const Index T = 1 + Index(rng() % 20), C = 1 + Index(rng() % 5);
    const RowVector clip_p = random_matrix(1, C, rng, 0, 1);
    const Matrix frame_p = random_matrix(T, C, rng, 0, 1);
    const ClipPrediction clip = predict_clip(clip_p);
    const double g1 = 0.05 + 0.9 * double(rng() % 1000) / 1000.0;
    const double g2 = std::min(0.99, g1 + 0.1);
    const FramePrediction lo = predict(clip, frame_p, g1);
    const FramePrediction hi = predict(clip, frame_p, g2);
    for (Index c = 0; c < C; ++c) {
      for (Index t = 0; t < T; ++t) {
        if (lo.labels(t, c)) CHECK(clip.labels(c));
        if (hi.labels(t, c)) CHECK(lo.labels(t, c));
      }
    }
  }
}

TEST_CASE("SDS leaves clip-level predictions unchanged") {
  std::mt19937_64 rng(12);
  for (const char* k : {"iatp", "eatp"}) {
    ModelConfig shared;
    shared.encoder = EncoderConfig::mlp(6, {5}, Activation::kTanh);
    shared.pooling = PoolingSpec::parse(k);
    shared.num_classes = 3;
    ModelConfig sds = shared;
    sds.sds = true;
    Model a(shared, DFAllocation::none(3, 5), 4);
    Model b(sds, DFAllocation::none(3, 5), 4);
    for (int i = 0; i < 10; ++i) {
      const Matrix x = random_matrix(7, 6, rng);
      const Model::Inference ra = a.infer(x);
      const Model::Inference rb = b.infer(x);
      CHECK((ra.clip_probs.array() == rb.clip_probs.array()).all());
      // The SDS frame surface is sigmoid(w_c . x_t) on the encoder output.
      const Matrix sig = (1.0 / (1.0 + (-(rb.reps * b.params().at("att.weight").value)).array().exp()))
                             .matrix();
      CHECK(rb.frame_probs.isApprox(sig, 1e-14));
    }
  }
}

TEST_CASE("model configuration constraints") {
  ModelConfig c;
  c.encoder = EncoderConfig::identity(4);
  c.num_classes = 2;
  c.pooling = PoolingSpec::parse("egmp");
  c.sds = true;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("SDS requires atp"), Error);
  c.sds = false;
  c.df = DfMode::kDf1;
  c.pooling = PoolingSpec::parse("igap");
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("DF requires"), Error);
  c.pooling = PoolingSpec::parse("eatp");
  CHECK_NOTHROW(c.validate());
  c.m = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
}
