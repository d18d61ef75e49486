#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "smcvi/io.hpp"

using namespace smcvi;
namespace fs = std::filesystem;

namespace {

class IoTest : public testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("smcvi_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path file(const std::string& name) const { return dir_ / name; }
  void write(const std::string& name, const std::string& text) const { std::ofstream(file(name)) << text; }
  static std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(IoTest, MatrixRoundTripIsExact) {
  Eigen::MatrixXd m(3, 2);
  m << 0.1, -2.5e-17, 1.0 / 3.0, 12345.678, -0.0, std::exp(1.0);
  io::write_matrix_csv(file("m.csv"), m, {"a", "b"});
  const auto back = io::read_matrix_csv(file("m.csv"));
  ASSERT_EQ(back.rows(), 3);
  ASSERT_EQ(back.cols(), 2);
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 2; ++j) EXPECT_EQ(back(i, j), m(i, j));
}

TEST_F(IoTest, MatrixWithoutHeader) {
  write("m.csv", "1,2\n3,4\n");
  const auto m = io::read_matrix_csv(file("m.csv"));
  EXPECT_EQ(m.rows(), 2);
  EXPECT_EQ(m(1, 0), 3.0);
}

TEST_F(IoTest, MatrixFormatErrors) {
  write("ragged.csv", "1,2\n3\n");
  EXPECT_THROW(io::read_matrix_csv(file("ragged.csv")), io::FormatError);
  write("bad.csv", "x,y\n1,abc\n");
  EXPECT_THROW(io::read_matrix_csv(file("bad.csv")), io::FormatError);
  EXPECT_THROW(io::read_matrix_csv(file("missing.csv")), io::FormatError);
}

TEST_F(IoTest, EventsRoundTripUsesOneBasedMarks) {
  const hawkes::EventStream ev{{0.5, 0}, {1.25, 2}, {3.0, 1}};
  io::write_events_csv(file("e.csv"), ev);
  const auto text = slurp(file("e.csv"));
  EXPECT_EQ(text.substr(0, text.find('\n')), "timestamp_seconds,mark");
  EXPECT_NE(text.find("1.25,3"), std::string::npos);
  const auto back = io::read_events_csv(file("e.csv"));
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].t, ev[i].t);
    EXPECT_EQ(back[i].mark, ev[i].mark);
  }
}

TEST_F(IoTest, EventFormatErrors) {
  write("zero.csv", "timestamp_seconds,mark\n0.5,0\n");
  EXPECT_THROW(io::read_events_csv(file("zero.csv")), io::FormatError);
  write("order.csv", "timestamp_seconds,mark\n1.0,1\n1.0,2\n");
  EXPECT_THROW(io::read_events_csv(file("order.csv")), io::FormatError);
  write("frac.csv", "timestamp_seconds,mark\n1.0,1.5\n");
  EXPECT_THROW(io::read_events_csv(file("frac.csv")), io::FormatError);
}

TEST_F(IoTest, TraceHeader) {
  io::write_trace_csv(file("t.csv"), {{0, -10.5, -9.0, 1.5}, {1, -9.0, -8.0, 1.0}});
  const auto text = slurp(file("t.csv"));
  EXPECT_EQ(text.substr(0, text.find('\n')), "iteration,elbo,log_Z,kl_term");
  const auto m = io::read_matrix_csv(file("t.csv"));
  EXPECT_EQ(m.rows(), 2);
  EXPECT_EQ(m(0, 1), -10.5);
}

TEST_F(IoTest, DensityGridWithSidecar) {
  diag::DensityGrid g{{"x0", 0, -1.0, 1.0, 2}, {"x1", 2, 0.0, 1.0, 3}, {0.0, 0.5, 0.0}, {1, 2, 3, 4, 5, 6}};
  io::write_density_grid(file("g.csv"), file("g.json"), g);
  const auto m = io::read_matrix_csv(file("g.csv"));
  ASSERT_EQ(m.rows(), 6);
  EXPECT_EQ(m(5, 0), 1.0);
  EXPECT_EQ(m(5, 1), 1.0);
  EXPECT_EQ(m(5, 2), 6.0);
  const auto js = slurp(file("g.json"));
  EXPECT_NE(js.find("\"fixed\""), std::string::npos);
  EXPECT_NE(js.find("\"x1\""), std::string::npos);
}

TEST_F(IoTest, CheckpointRoundTrip) {
  io::Checkpoint c;
  c.model = "lgss-ar";
  c.mode = FitMode::Em;
  c.seed = 42;
  c.iteration = 150;
  c.family = MeanFieldFamily({{"lambda", FactorKind::Normal, 0.123456789012345, -2.3},
                              {"nu", FactorKind::SigmoidNormal, -4.59, std::log(0.1)},
                              {"s2", FactorKind::LogNormal, 0.1, -1.0}});
  c.phi = {0.1, 1.0 / 7.0};
  c.phi_names = {"a", "b"};
  c.adam.m = {1e-300, -2.0};
  c.adam.v = {3.0, 4.0};
  c.adam.t = 150;
  c.recipe_state = {1.0, 0.0};
  io::save_checkpoint(file("c.json"), c);
  const auto b = io::load_checkpoint(file("c.json"));
  EXPECT_EQ(b.model, c.model);
  EXPECT_EQ(b.mode, c.mode);
  EXPECT_EQ(b.seed, 42u);
  EXPECT_EQ(b.iteration, 150u);
  ASSERT_EQ(b.family.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(b.family[i].name, c.family[i].name);
    EXPECT_EQ(b.family[i].kind, c.family[i].kind);
    EXPECT_EQ(b.family[i].mu, c.family[i].mu);
    EXPECT_EQ(b.family[i].v, c.family[i].v);
  }
  EXPECT_EQ(b.phi, c.phi);
  EXPECT_EQ(b.phi_names, c.phi_names);
  EXPECT_EQ(b.adam.m, c.adam.m);
  EXPECT_EQ(b.adam.v, c.adam.v);
  EXPECT_EQ(b.adam.t, 150u);
  EXPECT_EQ(b.recipe_state, c.recipe_state);
}

TEST_F(IoTest, CheckpointFormatErrors) {
  EXPECT_THROW(io::checkpoint_from_json("{not json"), io::FormatError);
  EXPECT_THROW(io::checkpoint_from_json("{\"model\": \"x\"}"), io::FormatError);
  EXPECT_THROW(io::load_checkpoint(file("none.json")), io::FormatError);
}
