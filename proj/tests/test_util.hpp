#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#include "stolen/embedding_store.hpp"

namespace testutil {

namespace fs = std::filesystem;

inline fs::path data_dir() { return STOLEN_DATA_DIR; }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("stolen_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;
  const fs::path &path() const { return path_; }
  fs::path operator/(const std::string &name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline stolen::Vocabulary numbered_vocab(std::size_t n) {
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < n; ++i)
    tokens.push_back("w" + std::to_string(i));
  return stolen::Vocabulary(std::move(tokens));
}

inline stolen::EmbeddingSpace gaussian_space(std::size_t n, std::size_t d,
                                             std::uint64_t seed, double bias_scale = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd b(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j)
      x(i, j) = g(rng);
    b[i] = bias_scale * g(rng);
  }
  return stolen::EmbeddingSpace(numbered_vocab(n), x, b);
}

inline stolen::EmbeddingSpace uniform_space(std::size_t n, std::size_t d,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      x(i, j) = u(rng);
  return stolen::EmbeddingSpace(numbered_vocab(n), x);
}

// Unit square corners plus the center (word 4).
inline stolen::EmbeddingSpace square_plus_center() {
  Eigen::MatrixXd x(5, 2);
  x << 0, 0, 1, 0, 0, 1, 1, 1, 0.5, 0.5;
  return stolen::EmbeddingSpace(stolen::Vocabulary({"c00", "c10", "c01", "c11", "mid"}), x);
}

}  // namespace testutil
