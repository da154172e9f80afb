#include <doctest.h>

#include "vqsign/rng.hpp"
#include "vqsign/vq.hpp"

using namespace vqsign;

namespace {

using MatD = Matrix<double>;

Codebook<double> random_book(int entries, int dim, std::uint64_t seed) {
  Rng rng(seed);
  return make_codebook<double>("test", entries, dim, {StreamId::All}, rng);
}

// Independent oracle: plain exhaustive search accumulating the distance
// term by term.
int brute_force_nearest(const MatD& z, int row, const MatD& book) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int j = 0; j < book.rows(); ++j) {
    double d = 0;
    for (int c = 0; c < book.cols(); ++c) {
      const double diff = z(row, c) - book(j, c);
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("exact codebook matches quantize with zero loss") {
  Codebook<double> book = random_book(16, 8, 1);
  MatD z(1, 8);
  z = book.entries.value.row(7);
  const auto outcome = quantize_hard(z, book);
  CHECK(outcome.indices == std::vector<int>{7});
  CHECK(outcome.loss_codebook == 0.0);
  CHECK(outcome.loss_commit == 0.0);
  CHECK(outcome.z_q.row(0) == book.entries.value.row(7));
  CHECK(book.usage[7] == 1);
}

TEST_CASE("nearest neighbor geometry and lowest-index tie break") {
  Codebook<double> book = random_book(2, 2, 2);
  book.entries.value << 0, 0, 1, 0;
  MatD z(3, 2);
  z << 0.4, 0, 0.6, 0, 0.5, 0;
  const auto outcome = quantize_hard(z, book);
  CHECK(outcome.indices == std::vector<int>{0, 1, 0});
}

TEST_CASE("quantize_hard agrees with exhaustive search on random data") {
  Codebook<double> book = random_book(64, 16, 3);
  Rng rng(4);
  MatD z(256, 16);
  for (int r = 0; r < z.rows(); ++r)
    for (int c = 0; c < z.cols(); ++c) z(r, c) = rng.normal();
  const auto outcome = quantize_hard(z, book);
  for (int r = 0; r < z.rows(); ++r)
    CHECK(outcome.indices[std::size_t(r)] == brute_force_nearest(z, r, book.entries.value));
}

TEST_CASE("quantize_hard is idempotent in index space") {
  Codebook<double> book = random_book(32, 8, 5);
  Rng rng(6);
  MatD z(40, 8);
  for (int r = 0; r < z.rows(); ++r)
    for (int c = 0; c < z.cols(); ++c) z(r, c) = rng.normal();
  const auto first = quantize_hard(z, book);
  const auto second = quantize_hard(first.z_q, book);
  CHECK(first.indices == second.indices);
  // Snapped rows are bit-equal codebook rows.
  for (int r = 0; r < z.rows(); ++r)
    CHECK(first.z_q.row(r) == book.entries.value.row(first.indices[std::size_t(r)]));
}

TEST_CASE("gumbel quantization at tiny temperature matches hard quantization") {
  Codebook<double> book = random_book(24, 6, 7);
  Rng noise(8);
  MatD z(30, 6);
  for (int r = 0; r < z.rows(); ++r)
    for (int c = 0; c < z.cols(); ++c) z(r, c) = noise.normal();
  GumbelSchedule schedule;
  schedule.start_temperature = 1e-6;
  schedule.end_temperature = 1e-6;
  Rng rng(9);
  const auto soft = quantize_gumbel(z, book, schedule, rng);
  const auto hard = quantize_hard(z, book);
  CHECK(soft.indices == hard.indices);
}

TEST_CASE("gumbel sampling is deterministic for a fixed rng seed") {
  Codebook<double> book = random_book(16, 4, 10);
  Rng noise(11);
  MatD z(20, 4);
  for (int r = 0; r < z.rows(); ++r)
    for (int c = 0; c < z.cols(); ++c) z(r, c) = noise.normal();
  GumbelSchedule schedule;
  schedule.start_temperature = 2.0;
  schedule.end_temperature = 0.5;
  schedule.current_step = 100;
  schedule.decay_steps = 300;
  Rng a(12), b(12);
  CHECK(quantize_gumbel(z, book, schedule, a).indices ==
        quantize_gumbel(z, book, schedule, b).indices);
}

TEST_CASE("gumbel selection over equal distances is near-uniform") {
  Codebook<double> book = random_book(2, 2, 13);
  book.entries.value << 1, 0, -1, 0;
  MatD z(1, 2);
  z << 0, 0;  // equidistant
  GumbelSchedule schedule;
  schedule.start_temperature = 5.0;
  schedule.end_temperature = 5.0;
  Rng rng(14);
  int first = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const auto idx = gumbel_indices(detail::squared_distances(z, book.entries.value), 5.0, rng);
    first += idx[0] == 0 ? 1 : 0;
  }
  const double frequency = double(first) / trials;
  CHECK(frequency > 0.45);
  CHECK(frequency < 0.55);
}

TEST_CASE("diversity loss spans its bounds") {
  MatD one_hot = MatD::Zero(5, 4);
  for (int r = 0; r < 5; ++r) one_hot(r, 2) = 1.0;
  CHECK(diversity_loss(one_hot) == doctest::Approx(1.0).epsilon(1e-9));

  MatD uniform = MatD::Constant(3, 8, 1.0 / 8.0);
  CHECK(diversity_loss(uniform) == doctest::Approx(0.0).epsilon(1e-12));

  // Mean assignment (0.5, 0.5, 0, 0): 1 - log 2 / log 4 = 0.5.
  MatD half = MatD::Zero(2, 4);
  half(0, 0) = 1.0;
  half(1, 1) = 1.0;
  CHECK(diversity_loss(half) == doctest::Approx(0.5).epsilon(1e-9));

  MatD bad = MatD::Constant(2, 4, 0.3);
  CHECK_THROWS_AS((void)diversity_loss(bad), std::invalid_argument);
}

TEST_CASE("perplexity matches hand-computed entropies") {
  CHECK(perplexity(std::vector<double>{5, 0, 0}) == doctest::Approx(1.0));
  std::vector<double> uniform(200, 3.0);
  CHECK(perplexity(uniform) == doctest::Approx(200.0).epsilon(1e-9));
  // H(0.75, 0.25) = 0.5623...; exp = 1.7548.
  CHECK(perplexity(std::vector<double>{3, 1, 0, 0}) == doctest::Approx(1.75477).epsilon(1e-4));
  CHECK_THROWS_AS((void)perplexity(std::vector<double>{0, 0}), std::invalid_argument);
}

TEST_CASE("dead code reinit replaces exactly the under-used codes") {
  Codebook<double> book = random_book(8, 4, 20);
  const MatD before = book.entries.value;
  for (auto& u : book.usage) u = 100;

  Rng rng(21);
  MatD sample(16, 4);
  for (int r = 0; r < sample.rows(); ++r)
    for (int c = 0; c < sample.cols(); ++c) sample(r, c) = rng.normal();

  SUBCASE("all codes above threshold leave the book unchanged") {
    Rng reinit_rng(22);
    CHECK(reinit_dead_codes(book, sample, 10, 4, reinit_rng) == 0);
    CHECK(book.entries.value == before);
  }

  SUBCASE("a constant sample pins the dead code to that value") {
    book.usage[3] = 0;
    MatD constant = MatD::Zero(8, 4);
    constant.rowwise() = Eigen::Matrix<double, 1, 4>(1.5, -2.0, 0.25, 9.0);
    Rng reinit_rng(23);
    CHECK(reinit_dead_codes(book, constant, 10, 4, reinit_rng) == 1);
    CHECK(book.entries.value(3, 0) == 1.5);
    CHECK(book.entries.value(3, 3) == 9.0);
    CHECK(book.usage[3] == 0);
    CHECK(book.usage[0] == 100);
  }

  SUBCASE("replacement rows equal independently recomputed sample means") {
    for (int dead : {1, 4, 6}) book.usage[std::size_t(dead)] = 2;
    Rng reinit_rng(24);
    Rng replay(24);  // same stream, replayed by the oracle
    const int replaced = reinit_dead_codes(book, sample, 5, 3, reinit_rng);
    CHECK(replaced == 3);
    for (int dead : {1, 4, 6}) {
      Eigen::Matrix<double, 1, 4> mean = Eigen::Matrix<double, 1, 4>::Zero();
      for (int s = 0; s < 3; ++s)
        mean += sample.row(Eigen::Index(replay.uniform_int(std::uint64_t(sample.rows()))));
      mean /= 3.0;
      CHECK((book.entries.value.row(dead) - mean).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("a sample smaller than sample_size is rejected") {
    Rng reinit_rng(25);
    MatD tiny = sample.topRows(2);
    CHECK_THROWS_AS((void)reinit_dead_codes(book, tiny, 10, 4, reinit_rng),
                    std::invalid_argument);
  }
}

TEST_CASE("gumbel schedule decays monotonically to its floor") {
  GumbelSchedule schedule;
  schedule.start_temperature = 1.0;
  schedule.end_temperature = 0.1;
  schedule.decay_steps = 100;
  double prev = 1e9;
  for (int step = 0; step < 1000; step += 50) {
    schedule.current_step = step;
    const double t = schedule.temperature();
    CHECK(t <= prev);
    CHECK(t >= 0.1);
    prev = t;
  }
  schedule.current_step = 100000;
  CHECK(schedule.temperature() == doctest::Approx(0.1));
}
