#include "calabi/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "calabi/errors.hpp"

namespace calabi {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end) throw Error(ErrorKind::Parameter, "bad number for " + key + ": '" + v + "'");
  return x;
}

long to_int(const std::string& key, const std::string& v) {
  long x = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end) throw Error(ErrorKind::Parameter, "bad integer for " + key + ": '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(ErrorKind::Parameter, "bad boolean for " + key + ": '" + v + "'");
}

}  // namespace

RunConfig default_run_config() {
  RunConfig c;
  c.flow.geometric_k_max = 8;
  return c;
}

std::string format_number(double x) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  (void)ec;
  return std::string(buf, p);
}

void apply_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  FlowConfig& f = c.flow;
  if (key == "n") {
    f.n = static_cast<int>(to_int(key, value));
  } else if (key == "a0") {
    f.a0 = to_double(key, value);
  } else if (key == "b0") {
    f.b0 = to_double(key, value);
  } else if (key == "L") {
    f.L = to_double(key, value);
  } else if (key == "N") {
    const long N = to_int(key, value);
    if (N < 0) throw Error(ErrorKind::Parameter, "N must be positive");
    f.N = static_cast<std::size_t>(N);
  } else if (key == "eps_stop") {
    f.eps_stop = to_double(key, value);
  } else if (key == "cfl") {
    f.cfl = to_double(key, value);
  } else if (key == "k_max") {
    f.geometric_k_max = static_cast<int>(to_int(key, value));
  } else if (key == "checkpoints") {
    f.checkpoints.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) f.checkpoints.push_back(to_double(key, item));
    }
  } else if (key == "extrapolate") {
    f.extrapolate = to_bool(key, value);
  } else if (key == "mu") {
    c.mu = to_double(key, value);
  } else if (key == "nu") {
    c.nu = to_double(key, value);
  } else if (key == "out") {
    c.out_dir = value;
  } else {
    throw Error(ErrorKind::Parameter, "unknown config key '" + key + "'");
  }
}

void apply_config_text(RunConfig& c, const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::Parameter, "config line " + std::to_string(lineno) + ": expected key = value");
    }
    apply_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  apply_config_text(base, read_text(path));
  return base;
}

std::map<std::string, std::string> config_map(const RunConfig& c) {
  const FlowConfig& f = c.flow;
  std::map<std::string, std::string> m;
  m["n"] = std::to_string(f.n);
  m["a0"] = format_number(f.a0);
  m["b0"] = format_number(f.b0);
  m["L"] = format_number(f.L);
  m["N"] = std::to_string(f.N);
  m["eps_stop"] = format_number(f.eps_stop);
  m["cfl"] = format_number(f.cfl);
  m["k_max"] = std::to_string(f.geometric_k_max);
  std::string cps;
  for (std::size_t i = 0; i < f.checkpoints.size(); ++i) cps += (i ? "," : "") + format_number(f.checkpoints[i]);
  m["checkpoints"] = cps;
  m["extrapolate"] = f.extrapolate ? "true" : "false";
  m["mu"] = c.mu ? format_number(*c.mu) : "";
  m["nu"] = c.nu ? format_number(*c.nu) : "";
  m["deterministic"] = "true";
  return m;
}

std::string canonical_config(const RunConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_map(c)) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical_config(c))));
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  os << text;
  if (!os) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace calabi
