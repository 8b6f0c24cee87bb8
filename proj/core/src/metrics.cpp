#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fedse/digest.hpp"
#include "fedse/errors.hpp"
#include "fedse/experiment.hpp"

namespace fedse::experiment {

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << content;
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <class T>
T cell_number(const std::string& cell, std::size_t line) {
  T v{};
  const auto* end = cell.data() + cell.size();
  const auto [p, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc{} || p != end)
    throw ContractViolation("metrics.csv line " + std::to_string(line) + ": bad number '" + cell +
                            "'");
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return {buf, p};
}

std::string to_csv(const std::vector<MetricRecord>& records) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : records) {
    out += r.run_id + ',' + r.mode + ',' + std::to_string(r.round) + ',' + r.client + ',' +
           r.env_id + ',' + format_double(r.success_rate) + ',' + std::to_string(r.buffer_size) +
           ',' + format_double(r.loss) + ',' + std::to_string(r.bytes) + '\n';
  }
  return out;
}

std::vector<MetricRecord> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw ContractViolation("metrics.csv: missing or unexpected header");
  std::vector<MetricRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 9)
      throw ContractViolation("metrics.csv line " + std::to_string(line_no) + ": expected 9 fields");
    out.push_back({cells[0], cells[1], cell_number<std::size_t>(cells[2], line_no), cells[3],
                   cells[4], cell_number<double>(cells[5], line_no),
                   cell_number<std::size_t>(cells[6], line_no),
                   cell_number<double>(cells[7], line_no),
                   cell_number<std::uint64_t>(cells[8], line_no)});
  }
  return out;
}

std::vector<MetricRecord> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

void emit_metrics(const std::vector<MetricRecord>& records, const std::filesystem::path& dir,
                  const std::string& config_snapshot, std::uint64_t base_hash) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  write_file(dir / "metrics.csv", to_csv(records));

  std::string jsonl;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["run_id"] = r.run_id;
    j["mode"] = r.mode;
    j["round"] = r.round;
    j["client"] = r.client;
    j["env_id"] = r.env_id;
    j["success_rate"] = r.success_rate;
    j["buffer_size"] = r.buffer_size;
    j["loss"] = r.loss;
    j["bytes"] = r.bytes;
    jsonl += j.dump() + "\n";
  }
  write_file(dir / "metrics.jsonl", jsonl);
  write_file(dir / "config.snapshot", config_snapshot);
  write_file(dir / "base.hash", to_hex(base_hash) + "\n");
}

}  // namespace fedse::experiment
