#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "koopkan/errors.hpp"
#include "koopkan/io.hpp"
#include "support.hpp"

using namespace koopkan;

TEST(FormatDouble, SeventeenSignificantDigits) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(std::nan("")), "");
  for (double v : {1.0 / 3.0, -2.5e-300, 6.02214076e23, 9513.3052715375397}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(Csv, RoundTripWithEmptyFields) {
  const auto dir = koopkan::testing::fresh_dir("csv");
  CsvTable t;
  t.header = {"a", "b"};
  t.rows = {{1.0 / 3.0, -4.0}, {5.5, std::nan("")}};
  write_csv(dir / "t.csv", t);
  const CsvTable back = read_csv(dir / "t.csv");
  EXPECT_EQ(back.header, t.header);
  ASSERT_EQ(back.rows.size(), 2u);
  EXPECT_EQ(back.rows[0], t.rows[0]);
  EXPECT_TRUE(std::isnan(back.rows[1][1]));
  EXPECT_EQ(back.column("b"), 1u);
  EXPECT_THROW(back.column("c"), InvalidInput);
}

TEST(Csv, MissingFileAndMalformedRow) {
  const auto dir = koopkan::testing::fresh_dir("csv_bad");
  EXPECT_THROW(read_csv(dir / "nope.csv"), FileError);
  std::ofstream(dir / "bad.csv") << "a,b\n1,2,3\n";
  EXPECT_THROW(read_csv(dir / "bad.csv"), InvalidInput);
  std::ofstream(dir / "text.csv") << "a\nhello\n";
  EXPECT_THROW(read_csv(dir / "text.csv"), InvalidInput);
}

TEST(Csv, TrajectoryRoundTripIsExact) {
  const auto dir = koopkan::testing::fresh_dir("traj");
  PendulumDatasetConfig dc;
  dc.n_ic = 1;
  const Trajectory t = generate_pendulum_dataset(dc)[0];
  write_csv(dir / "t.csv", trajectory_table(t, {"theta", "theta_dot"}, {"u"}));
  const Trajectory back = trajectory_from_table(read_csv(dir / "t.csv"), 2, 1, t.dt);
  EXPECT_TRUE(koopkan::testing::bit_equal({t}, {back}));
}

TEST(Json, MatrixRoundTrip) {
  Rng rng(1);
  const Matrix m = koopkan::testing::random_matrix(rng, 3, 4);
  EXPECT_EQ(matrix_from_json(matrix_to_json(m)), m);
  const Vector v = koopkan::testing::random_vector(rng, 5, -1, 1);
  EXPECT_EQ(vector_from_json(vector_to_json(v)), v);
  EXPECT_EQ(matrix_from_json(matrix_to_json(Matrix(0, 3))).cols(), 3);
}

TEST(Json, FileRoundTrip) {
  const auto dir = koopkan::testing::fresh_dir("json");
  const nlohmann::json j = {{"x", 0.1}, {"k", {1, 2}}};
  write_json(dir / "a.json", j);
  EXPECT_EQ(read_json(dir / "a.json"), j);
  EXPECT_THROW(read_json(dir / "missing.json"), FileError);
}
