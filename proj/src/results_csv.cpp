#include "cfmm/harness.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

namespace cfmm {

namespace {

void put(std::string& out, double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  out.append(buf, res.ptr);
}

void put(std::string& out, long long x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  out.append(buf, res.ptr);
}

double get_double(const std::string& field, int line) {
  double x = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), x);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw ConfigError("results line " + std::to_string(line) + ": bad number '" + field + "'");
  return x;
}

int get_int(const std::string& field, int line) {
  int x = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), x);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw ConfigError("results line " + std::to_string(line) + ": bad integer '" + field + "'");
  return x;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string::size_type start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

constexpr int kFixedColumns = 8;

}  // namespace

std::string format_results(const ResultTable& table) {
  std::string out = "method,rho_bs_dbm,drop,iteration,sum_group_rate,effective_rate,sum_mse,sum_group_mse";
  for (int g = 0; g < table.num_groups; ++g) out += ",min_sinr_db_g" + std::to_string(g + 1);
  out += '\n';
  for (const auto& t : table.traces)
    for (const auto& r : t.records) {
      if (static_cast<int>(r.min_sinr_db.size()) != table.num_groups)
        throw ContractError("trace of " + t.method + " has " + std::to_string(r.min_sinr_db.size()) +
                            " group columns, table expects " + std::to_string(table.num_groups));
      out += t.method;
      out += ',';
      put(out, t.rho_bs_dbm);
      out += ',';
      put(out, static_cast<long long>(t.drop));
      out += ',';
      put(out, static_cast<long long>(r.iteration));
      for (double x : {r.sum_group_rate, r.effective_rate, r.sum_mse, r.sum_group_mse}) {
        out += ',';
        put(out, x);
      }
      for (double x : r.min_sinr_db) {
        out += ',';
        put(out, x);
      }
      out += '\n';
    }
  return out;
}

void write_results(const ResultTable& table, const std::string& path) {
  const std::string text = format_results(table);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::system_error(errno, std::generic_category(), "cannot open '" + path + "' for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  f.close();
  if (!f) throw std::system_error(errno, std::generic_category(), "write to '" + path + "' failed");
}

ResultTable parse_results(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("results: empty input");
  const auto header = split(line);
  if (static_cast<int>(header.size()) < kFixedColumns || header[0] != "method")
    throw ConfigError("results: unexpected header");

  ResultTable table;
  table.num_groups = static_cast<int>(header.size()) - kFixedColumns;
  std::vector<std::string> order;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) throw ConfigError("results line " + std::to_string(line_no) + ": wrong column count");
    const double rho = get_double(f[1], line_no);
    const int drop = get_int(f[2], line_no);
    if (table.traces.empty() || table.traces.back().method != f[0] || table.traces.back().drop != drop ||
        table.traces.back().rho_bs_dbm != rho) {
      RunTrace t;
      t.method = f[0];
      t.rho_bs_dbm = rho;
      t.drop = drop;
      table.traces.push_back(std::move(t));
      if (std::find(order.begin(), order.end(), f[0]) == order.end()) order.push_back(f[0]);
    }
    IterationRecord r;
    r.iteration = get_int(f[3], line_no);
    r.sum_group_rate = get_double(f[4], line_no);
    r.effective_rate = get_double(f[5], line_no);
    r.sum_mse = get_double(f[6], line_no);
    r.sum_group_mse = get_double(f[7], line_no);
    for (std::size_t c = kFixedColumns; c < f.size(); ++c) r.min_sinr_db.push_back(get_double(f[c], line_no));
    table.traces.back().records.push_back(std::move(r));
  }
  table.summary = summarize(table.traces, order);
  return table;
}

ResultTable read_results(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::system_error(errno, std::generic_category(), "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_results(ss.str());
}

}  // namespace cfmm
