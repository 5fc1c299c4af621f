#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "zss/checkpoint.hpp"

using zss::Tensor;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("checkpoint round-trip is bit exact", "[checkpoint]") {
  zss::Rng rng(42);
  zss::NamedParams<float> params;
  params.emplace_back("a.weight", Tensor<float>::randn({4, 3}, rng));
  params.emplace_back("a.bias", Tensor<float>::randn({4}, rng));
  params.emplace_back("b.table", Tensor<float>::randn({7, 2, 5}, rng));
  // Include values that stress exactness.
  params[0].second.mutable_data()[0] = 1e-38f;
  params[0].second.mutable_data()[1] = -0.0f;

  std::string path = temp_path("zss_ckpt_test.bin");
  zss::save_checkpoint(path, params);
  auto loaded = zss::load_checkpoint<float>(path);

  REQUIRE(loaded.size() == params.size());
  for (const auto& [name, t] : params) {
    bool found = false;
    for (const auto& [lname, lt] : loaded) {
      if (lname != name) continue;
      found = true;
      REQUIRE(lt.shape() == t.shape());
      REQUIRE(std::memcmp(lt.data().data(), t.data().data(),
                          t.numel() * sizeof(float)) == 0);
    }
    REQUIRE(found);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint save/load/save produces identical bytes", "[checkpoint][property]") {
  zss::Rng rng(43);
  zss::NamedParams<double> params;
  params.emplace_back("x", Tensor<double>::randn({16}, rng));
  params.emplace_back("y", Tensor<double>::randn({2, 2}, rng));

  std::string p1 = temp_path("zss_ckpt_a.bin");
  std::string p2 = temp_path("zss_ckpt_b.bin");
  zss::save_checkpoint(p1, params);
  auto loaded = zss::load_checkpoint<double>(p1);
  zss::save_checkpoint(p2, loaded);

  auto read_all = [](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
  };
  REQUIRE(read_all(p1) == read_all(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("restore_params validates names and shapes", "[checkpoint][errors]") {
  zss::Rng rng(44);
  zss::NamedParams<float> saved;
  saved.emplace_back("w", Tensor<float>::randn({3, 3}, rng));
  std::string path = temp_path("zss_ckpt_err.bin");
  zss::save_checkpoint(path, saved);
  auto loaded = zss::load_checkpoint<float>(path);

  zss::NamedParams<float> wrong_shape;
  wrong_shape.emplace_back("w", Tensor<float>::zeros({2, 2}));
  REQUIRE_THROWS_AS(zss::restore_params(loaded, wrong_shape), std::invalid_argument);

  zss::NamedParams<float> missing;
  missing.emplace_back("other", Tensor<float>::zeros({3, 3}));
  REQUIRE_THROWS_AS(zss::restore_params(loaded, missing), std::invalid_argument);

  zss::NamedParams<float> ok;
  ok.emplace_back("w", Tensor<float>::zeros({3, 3}));
  zss::restore_params(loaded, ok);
  REQUIRE(ok[0].second.data() == saved[0].second.data());
  std::remove(path.c_str());
}

TEST_CASE("loading a non-checkpoint file is rejected", "[checkpoint][errors]") {
  std::string path = temp_path("zss_not_ckpt.bin");
  {
    std::ofstream f(path, std::ios::binary);
    f << "this is not a checkpoint";
  }
  REQUIRE_THROWS_AS(zss::load_checkpoint<float>(path), std::invalid_argument);
  std::remove(path.c_str());
}

TEST_CASE("dtype mismatches are rejected", "[checkpoint][errors]") {
  zss::Rng rng(45);
  zss::NamedParams<float> params;
  params.emplace_back("w", Tensor<float>::randn({2}, rng));
  std::string path = temp_path("zss_ckpt_dtype.bin");
  zss::save_checkpoint(path, params);
  REQUIRE_THROWS_AS(zss::load_checkpoint<double>(path), std::invalid_argument);
  std::remove(path.c_str());
}
