#include "rswitch/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace rswitch {

namespace {

using nlohmann::json;

[[noreturn]] void fail_at(const std::string& path, long line, const std::string& msg) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

long parse_long(const std::string& s, const std::string& path, long line, const char* what) {
  if (s.empty()) fail_at(path, line, std::string("empty ") + what);
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (errno != 0 || end != s.c_str() + s.size())
    fail_at(path, line, std::string("bad integer for ") + what + ": '" + s + "'");
  return v;
}

double parse_double(const std::string& s, const std::string& path, long line, const char* what) {
  if (s.empty()) fail_at(path, line, std::string("empty ") + what);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    fail_at(path, line, std::string("bad number for ") + what + ": '" + s + "'");
  return v;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_u32(std::ofstream& f, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  f.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ofstream& f, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  f.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t read_u32(std::ifstream& f, const std::string& path) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error(path + ": truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t read_u64(std::ifstream& f, const std::string& path) {
  unsigned char b[8];
  if (!f.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error(path + ": truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

constexpr char kStatesMagic[8] = {'R', 'S', 'W', 'S', 'T', 'A', 'T', '1'};
constexpr int kFormatVersion = 1;

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error(path + ": cannot open");
  std::string line;
  long lineno = 0;
  if (!std::getline(f, line)) fail_at(path, 1, "empty file");
  ++lineno;
  std::vector<std::string> head = split_csv(line);
  if (head.size() < 3 || head[0] != "t" || head[1] != "n" || head[2] != "y")
    fail_at(path, 1, "header must start with t,n,y");
  Dataset d;
  bool has_const = false;
  for (size_t k = 3; k < head.size(); ++k) {
    if (head[k].empty()) fail_at(path, 1, "empty covariate name");
    if (head[k] == "const") has_const = true;
    d.cov_names.push_back(head[k]);
  }
  if (!has_const) d.cov_names.insert(d.cov_names.begin(), "const");
  d.n_cov = static_cast<int>(d.cov_names.size());
  if (d.n_cov == 0) fail_at(path, 1, "no covariates");

  const size_t n_fields = head.size();
  while (std::getline(f, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split_csv(line);
    if (fields.size() != n_fields)
      fail_at(path, lineno,
              "expected " + std::to_string(n_fields) + " fields, got " +
                  std::to_string(fields.size()));
    const long t = parse_long(fields[0], path, lineno, "t");
    const long n = parse_long(fields[1], path, lineno, "n");
    const long y = parse_long(fields[2], path, lineno, "y");
    if (t < 1) fail_at(path, lineno, "t must be >= 1");
    if (n < 1) fail_at(path, lineno, "n must be >= 1");
    if (y < 0) fail_at(path, lineno, "y must be >= 0");
    d.t.push_back(static_cast<int>(t));
    d.n.push_back(static_cast<int>(n));
    d.y.push_back(y);
    if (!has_const) d.X.push_back(1.0);
    for (size_t k = 3; k < n_fields; ++k)
      d.X.push_back(parse_double(fields[k], path, lineno, head[k].c_str()));
  }
  if (d.n_rows() == 0) fail_at(path, lineno, "no data rows");
  return d;
}

void save_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error(path + ": cannot open for writing");
  f << "t,n,y";
  for (const std::string& c : data.cov_names) f << ',' << c;
  f << '\n';
  for (size_t i = 0; i < data.n_rows(); ++i) {
    f << data.t[i] << ',' << data.n[i] << ',' << data.y[i];
    const auto x = data.x_row(i);
    for (double v : x) f << ',' << fmt_double(v);
    f << '\n';
  }
  if (!f) throw std::runtime_error(path + ": write failed");
}

uint64_t config_hash(const nlohmann::json& config) {
  const std::string dump = config.dump();  // object keys already sorted
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void persist_run(const std::string& prefix, const nlohmann::json& config, const RunResult& run,
                 std::span<const std::string> column_names) {
  json meta;
  meta["format_version"] = kFormatVersion;
  meta["config"] = config;
  meta["config_hash"] = hash_hex(config_hash(config));
  meta["columns"] = std::vector<std::string>(column_names.begin(), column_names.end());
  json chains = json::array();
  for (const ChainResult& c : run.chains) {
    json jc;
    jc["chain_id"] = c.chain_id;
    jc["seed"] = c.seed;
    jc["n_stored"] = c.n_stored;
    jc["n_free"] = c.n_free;
    jc["n_free_intervals"] = c.n_free_intervals;
    jc["T_tilde"] = c.T_tilde;
    jc["state_words"] = c.state_words;
    jc["accept_rate"] = c.accept_rate;
    jc["tuned_sigma"] = c.tuned_sigma;
    jc["tune_fit_ok"] = c.tune_fit_ok;
    jc["aborted"] = c.aborted;
    jc["abort_reason"] = c.abort_reason;
    chains.push_back(std::move(jc));
  }
  meta["chains"] = std::move(chains);
  {
    std::ofstream f(prefix + ".meta.json");
    if (!f) throw std::runtime_error(prefix + ".meta.json: cannot open for writing");
    f << meta.dump(2) << '\n';
    if (!f) throw std::runtime_error(prefix + ".meta.json: write failed");
  }

  for (const ChainResult& c : run.chains) {
    const std::string csv_path = prefix + ".chain" + std::to_string(c.chain_id) + ".csv";
    std::ofstream f(csv_path);
    if (!f) throw std::runtime_error(csv_path + ": cannot open for writing");
    f << "draw,loglik,logjoint";
    for (const std::string& name : column_names) f << ',' << name;
    f << '\n';
    for (long g = 0; g < c.n_stored; ++g) {
      f << g << ',' << fmt_double(c.loglik[g]) << ',' << fmt_double(c.logjoint[g]);
      for (int k = 0; k < c.n_free; ++k) f << ',' << fmt_double(c.coef[g * c.n_free + k]);
      for (int r = 0; r < c.n_free_intervals; ++r)
        f << ',' << fmt_double(c.p01[g * c.n_free_intervals + r]);
      for (int r = 0; r < c.n_free_intervals; ++r)
        f << ',' << fmt_double(c.p10[g * c.n_free_intervals + r]);
      f << '\n';
    }
    if (!f) throw std::runtime_error(csv_path + ": write failed");

    const std::string bin_path = prefix + ".chain" + std::to_string(c.chain_id) + ".states.bin";
    std::ofstream b(bin_path, std::ios::binary);
    if (!b) throw std::runtime_error(bin_path + ": cannot open for writing");
    b.write(kStatesMagic, 8);
    write_u32(b, static_cast<uint32_t>(c.T_tilde));
    write_u32(b, static_cast<uint32_t>(c.state_words));
    write_u64(b, static_cast<uint64_t>(c.n_stored));
    for (uint64_t w : c.states) write_u64(b, w);
    if (!b) throw std::runtime_error(bin_path + ": write failed");
  }
}

LoadedRun load_run(const std::string& prefix) {
  LoadedRun out;
  const std::string meta_path = prefix + ".meta.json";
  json meta;
  {
    std::ifstream f(meta_path);
    if (!f) throw std::runtime_error(meta_path + ": cannot open");
    try {
      f >> meta;
    } catch (const json::exception& e) {
      throw std::runtime_error(meta_path + ": " + e.what());
    }
  }
  if (!meta.contains("format_version") || meta["format_version"].get<int>() != kFormatVersion)
    throw std::runtime_error(meta_path + ": unsupported format version");
  out.config = meta.at("config");
  out.hash = config_hash(out.config);
  if (meta.at("config_hash").get<std::string>() != hash_hex(out.hash))
    throw std::runtime_error(meta_path + ": config hash mismatch (edited or mixed files)");
  out.column_names = meta.at("columns").get<std::vector<std::string>>();

  for (const json& jc : meta.at("chains")) {
    ChainResult c;
    c.chain_id = jc.at("chain_id").get<int>();
    c.seed = jc.at("seed").get<uint64_t>();
    c.n_stored = jc.at("n_stored").get<long>();
    c.n_free = jc.at("n_free").get<int>();
    c.n_free_intervals = jc.at("n_free_intervals").get<int>();
    c.T_tilde = jc.at("T_tilde").get<int>();
    c.state_words = jc.at("state_words").get<int>();
    c.accept_rate = jc.at("accept_rate").get<std::vector<double>>();
    c.tuned_sigma = jc.at("tuned_sigma").get<std::vector<double>>();
    c.tune_fit_ok = jc.at("tune_fit_ok").get<std::vector<uint8_t>>();
    c.aborted = jc.at("aborted").get<bool>();
    c.abort_reason = jc.at("abort_reason").get<std::string>();
    if (static_cast<int>(out.column_names.size()) != c.n_free + 2 * c.n_free_intervals)
      throw std::runtime_error(meta_path + ": column list does not match chain dimensions");

    const std::string csv_path = prefix + ".chain" + std::to_string(c.chain_id) + ".csv";
    std::ifstream f(csv_path);
    if (!f) throw std::runtime_error(csv_path + ": cannot open");
    std::string line;
    long lineno = 0;
    if (!std::getline(f, line)) fail_at(csv_path, 1, "empty file");
    ++lineno;
    const size_t n_fields = 3 + out.column_names.size();
    if (split_csv(line).size() != n_fields) fail_at(csv_path, 1, "header width mismatch");
    c.coef.reserve(c.n_stored * c.n_free);
    while (std::getline(f, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      const std::vector<std::string> fields = split_csv(line);
      if (fields.size() != n_fields) fail_at(csv_path, lineno, "field count mismatch");
      c.loglik.push_back(parse_double(fields[1], csv_path, lineno, "loglik"));
      c.logjoint.push_back(parse_double(fields[2], csv_path, lineno, "logjoint"));
      size_t pos = 3;
      for (int k = 0; k < c.n_free; ++k)
        c.coef.push_back(parse_double(fields[pos++], csv_path, lineno, "coef"));
      for (int r = 0; r < c.n_free_intervals; ++r)
        c.p01.push_back(parse_double(fields[pos++], csv_path, lineno, "p01"));
      for (int r = 0; r < c.n_free_intervals; ++r)
        c.p10.push_back(parse_double(fields[pos++], csv_path, lineno, "p10"));
    }
    if (static_cast<long>(c.loglik.size()) != c.n_stored)
      fail_at(csv_path, lineno, "row count does not match n_stored");

    const std::string bin_path = prefix + ".chain" + std::to_string(c.chain_id) + ".states.bin";
    std::ifstream b(bin_path, std::ios::binary);
    if (!b) throw std::runtime_error(bin_path + ": cannot open");
    char magic[8];
    if (!b.read(magic, 8) || std::memcmp(magic, kStatesMagic, 8) != 0)
      throw std::runtime_error(bin_path + ": bad magic");
    if (read_u32(b, bin_path) != static_cast<uint32_t>(c.T_tilde) ||
        read_u32(b, bin_path) != static_cast<uint32_t>(c.state_words) ||
        read_u64(b, bin_path) != static_cast<uint64_t>(c.n_stored))
      throw std::runtime_error(bin_path + ": dimensions disagree with metadata");
    c.states.resize(static_cast<size_t>(c.n_stored) * c.state_words);
    for (uint64_t& w : c.states) w = read_u64(b, bin_path);
    out.run.chains.push_back(std::move(c));
  }
  return out;
}

}  // namespace rswitch
