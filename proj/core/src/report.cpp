#include "saddlekit/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace saddlekit::bench {

std::string format_g12(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

const std::string* Summary::find(const std::string& key) const {
  for (const auto& [k, v] : items) {
    if (k == key) return &v;
  }
  return nullptr;
}

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir + "': " + ec.message());
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary: byte-identical output everywhere
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input file: " + path);
  return in;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

}  // namespace

void write_per_seed_csv(const std::string& path, const std::vector<SeedRow>& rows) {
  auto out = open_out(path);
  out << "experiment,variant,seed,final_barrier_error,final_residual,success\n";
  for (const auto& r : rows) {
    out << r.experiment << ',' << r.variant << ',' << r.seed << ','
        << format_g12(r.final_barrier_error) << ',' << format_g12(r.final_residual) << ','
        << r.success << '\n';
  }
}

void write_traj_csv(const std::string& path, const std::vector<TrajRow>& rows) {
  auto out = open_out(path);
  out << "variant,iter,mean_value,sem\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << r.iter << ',' << format_g12(r.mean_value) << ','
        << format_g12(r.sem) << '\n';
  }
}

void write_summary(const std::string& path, const Summary& summary) {
  auto out = open_out(path);
  for (const auto& [k, v] : summary.items) out << k << " = " << v << '\n';
}

std::vector<SeedRow> read_per_seed_csv(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty per-seed CSV: " + path);
  std::vector<SeedRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() != 6) throw std::runtime_error("malformed per-seed CSV row: " + line);
    SeedRow r;
    r.experiment = f[0];
    r.variant = f[1];
    r.seed = std::stoi(f[2]);
    r.final_barrier_error = std::stod(f[3]);
    r.final_residual = std::stod(f[4]);
    r.success = std::stoi(f[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<TrajRow> read_traj_csv(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trajectory CSV: " + path);
  std::vector<TrajRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() != 4) throw std::runtime_error("malformed trajectory CSV row: " + line);
    TrajRow r;
    r.variant = f[0];
    r.iter = std::stoi(f[1]);
    r.mean_value = std::stod(f[2]);
    r.sem = std::stod(f[3]);
    rows.push_back(std::move(r));
  }
  return rows;
}

Summary read_summary(const std::string& path) {
  auto in = open_in(path);
  Summary s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find(" = ");
    if (eq == std::string::npos) throw std::runtime_error("malformed summary line: " + line);
    s.items.emplace_back(line.substr(0, eq), line.substr(eq + 3));
  }
  return s;
}

}  // namespace saddlekit::bench
