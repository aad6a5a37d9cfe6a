#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "hlqr/matrix_io.hpp"
#include "test_util.hpp"

using namespace hlqr;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "hlqr_test_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(MatrixIo, CsvRoundTripIsExact) {
  std::mt19937_64 rng(1);
  const Matrix m = hlqr::testing::random_matrix(rng, 4, 3) * 1e-3;
  EXPECT_EQ(matrix_from_csv(matrix_to_csv(m)), m);
}

TEST(MatrixIo, JsonRoundTripIsExact) {
  Matrix m(2, 3);
  m << 1.0 / 3.0, -2.5e-300, 7, std::sqrt(2.0), 0, -1e300;
  const Matrix back = matrix_from_json(nlohmann::json::parse(matrix_to_json(m).dump()));
  EXPECT_EQ(back, m);
}

TEST(MatrixIo, JsonLayoutIsRowMajor) {
  const auto j = nlohmann::json::parse(R"({"rows":2,"cols":2,"data":[1,2,3,4]})");
  const Matrix m = matrix_from_json(j);
  EXPECT_EQ(m(0, 1), 2.0);
  EXPECT_EQ(m(1, 0), 3.0);
}

TEST(MatrixIo, RejectsMalformed) {
  EXPECT_THROW(matrix_from_csv("1,2\n3\n"), Error);
  EXPECT_THROW(matrix_from_csv("1,x\n"), Error);
  EXPECT_THROW(matrix_from_csv(""), Error);
  EXPECT_THROW(matrix_from_json(nlohmann::json::parse(R"({"rows":2,"cols":2,"data":[1]})")),
               Error);
}

TEST(MatrixIo, FilesInBothFormats) {
  Matrix m(2, 2);
  m << 1, 2, 3, 4.5;
  const auto csv = scratch("m.csv");
  const auto json = scratch("m.json");
  write_matrix_file(csv.string(), m);
  write_matrix_file(json.string(), m);
  EXPECT_EQ(read_matrix_file(csv.string()), m);
  EXPECT_EQ(read_matrix_file(json.string()), m);
  try {
    read_matrix_file(scratch("missing.csv").string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
  }
}

TEST(MatrixIo, VectorForms) {
  EXPECT_EQ(vector_from_json(nlohmann::json::parse("[1, 2, 3]")).size(), 3);
  const auto col = nlohmann::json::parse(R"({"rows":3,"cols":1,"data":[1,2,3]})");
  EXPECT_EQ(vector_from_json(col)(2), 3.0);
  const auto row = nlohmann::json::parse(R"({"rows":1,"cols":2,"data":[5,6]})");
  EXPECT_EQ(vector_from_json(row)(1), 6.0);
}
