#pragma once

#include <string>
#include <utility>
#include <vector>

namespace saddlekit::bench {

std::string format_g12(double x);

struct SeedRow {
  std::string experiment;
  std::string variant;
  int seed = 0;
  double final_barrier_error = 0.0;
  double final_residual = 0.0;
  int success = 1;
};

struct TrajRow {
  std::string variant;
  int iter = 0;
  double mean_value = 0.0;
  double sem = 0.0;
};

/// Ordered key/value summary document; insertion order is the file order.
struct Summary {
  std::vector<std::pair<std::string, std::string>> items;
  void add(const std::string& key, const std::string& value) { items.emplace_back(key, value); }
  void add(const std::string& key, double value) { items.emplace_back(key, format_g12(value)); }
  void add(const std::string& key, int value) { items.emplace_back(key, std::to_string(value)); }
  void add_u64(const std::string& key, unsigned long long value) {
    items.emplace_back(key, std::to_string(value));
  }
  const std::string* find(const std::string& key) const;
};

void ensure_directory(const std::string& dir);

void write_per_seed_csv(const std::string& path, const std::vector<SeedRow>& rows);
void write_traj_csv(const std::string& path, const std::vector<TrajRow>& rows);
void write_summary(const std::string& path, const Summary& summary);

std::vector<SeedRow> read_per_seed_csv(const std::string& path);
std::vector<TrajRow> read_traj_csv(const std::string& path);
Summary read_summary(const std::string& path);

}  // namespace saddlekit::bench
