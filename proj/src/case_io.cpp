#include "gridcert/case_io.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "gridcert/errors.hpp"

namespace gridcert {

namespace {

using json = nlohmann::json;

struct BusRow {
  long long id;
  int type;
  double pd;
};

struct GenRow {
  long long bus;
  double pg;
  bool in_service;
};

struct BranchRow {
  long long from;
  long long to;
  double x;
  bool in_service;
};

struct CaseTables {
  std::vector<BusRow> buses;
  std::vector<GenRow> gens;
  std::vector<BranchRow> branches;
};

std::string strip_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_comment = false;
  for (char c : text) {
    if (c == '%') in_comment = true;
    if (c == '\n') in_comment = false;
    if (!in_comment) out.push_back(c);
  }
  return out;
}

double parse_number(const std::string& token, std::string_view table) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0' || errno == ERANGE) {
    throw ParseError("bad number '" + token + "' in " + std::string(table));
  }
  return v;
}

long long as_id(double v, std::string_view table) {
  if (v != std::floor(v)) throw ParseError("non-integer bus id in " + std::string(table));
  return static_cast<long long>(v);
}

// Rows of `mpc.<name> = [ ... ];`. Missing tables yield an empty optional-like flag.
std::vector<std::vector<double>> matrix_block(const std::string& text, const std::string& name, bool& found) {
  found = false;
  const std::string key = "mpc." + name;
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    std::size_t after = pos + key.size();
    while (after < text.size() && std::isspace(static_cast<unsigned char>(text[after]))) ++after;
    if (after < text.size() && text[after] == '=') break;
    pos = after;
  }
  if (pos == std::string::npos) return {};
  const std::size_t open = text.find('[', pos);
  const std::size_t close = text.find(']', pos);
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw ParseError("unterminated matrix mpc." + name);
  }
  found = true;
  std::vector<std::vector<double>> rows;
  std::vector<double> row;
  std::string token;
  auto flush_token = [&] {
    if (!token.empty()) {
      row.push_back(parse_number(token, "mpc." + name));
      token.clear();
    }
  };
  auto flush_row = [&] {
    flush_token();
    if (!row.empty()) rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = open + 1; i < close; ++i) {
    const char c = text[i];
    if (c == ';' || c == '\n') {
      flush_row();
    } else if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
      flush_token();
    } else {
      token.push_back(c);
    }
  }
  flush_row();
  return rows;
}

CaseTables parse_matpower(std::string_view raw) {
  const std::string text = strip_comments(raw);
  CaseTables t;
  bool found = false;
  for (const auto& r : matrix_block(text, "bus", found)) {
    if (r.size() < 3) throw ParseError("mpc.bus rows need at least 3 columns");
    t.buses.push_back({as_id(r[0], "mpc.bus"), static_cast<int>(r[1]), r[2]});
  }
  if (!found) throw ParseError("missing mpc.bus");
  for (const auto& r : matrix_block(text, "gen", found)) {
    if (r.size() < 2) throw ParseError("mpc.gen rows need at least 2 columns");
    t.gens.push_back({as_id(r[0], "mpc.gen"), r[1], r.size() < 8 || r[7] > 0});
  }
  if (!found) throw ParseError("missing mpc.gen");
  for (const auto& r : matrix_block(text, "branch", found)) {
    if (r.size() < 4) throw ParseError("mpc.branch rows need at least 4 columns");
    t.branches.push_back({as_id(r[0], "mpc.branch"), as_id(r[1], "mpc.branch"), r[3], r.size() < 11 || r[10] > 0});
  }
  if (!found) throw ParseError("missing mpc.branch");
  return t;
}

template <typename T>
T field(const json& obj, const char* name, std::string_view table) {
  if (!obj.is_object() || !obj.contains(name)) {
    throw ParseError("missing field '" + std::string(name) + "' in " + std::string(table));
  }
  try {
    return obj.at(name).get<T>();
  } catch (const json::exception&) {
    throw ParseError("bad field '" + std::string(name) + "' in " + std::string(table));
  }
}

CaseTables parse_json_case(std::string_view text, std::string& case_id) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != "gridcert-case") throw ParseError("not a gridcert-case document");
  if (doc.value("version", 0) != 1) throw ParseError("unsupported gridcert-case version");
  if (case_id.empty()) case_id = doc.value("case_id", "");
  CaseTables t;
  for (const json& b : doc.value("bus", json::array())) {
    t.buses.push_back({field<long long>(b, "id", "bus"), b.value("type", 1), field<double>(b, "Pd", "bus")});
  }
  for (const json& g : doc.value("gen", json::array())) {
    t.gens.push_back({field<long long>(g, "bus", "gen"), field<double>(g, "Pg", "gen"), g.value("status", 1) > 0});
  }
  for (const json& br : doc.value("branch", json::array())) {
    t.branches.push_back({field<long long>(br, "from", "branch"), field<long long>(br, "to", "branch"),
                          field<double>(br, "x", "branch"), br.value("status", 1) > 0});
  }
  return t;
}

GridTopology build_topology(const CaseTables& t, std::string case_id) {
  std::map<long long, std::size_t> index;  // bus id -> node index, ascending ids
  std::map<long long, const BusRow*> bus_by_id;
  for (const BusRow& b : t.buses) {
    if (b.type == 4) continue;
    if (!bus_by_id.emplace(b.id, &b).second) throw ParseError("duplicate bus id " + std::to_string(b.id));
  }
  if (bus_by_id.empty()) throw ParseError("case has no buses");
  std::vector<Node> nodes;
  for (const auto& [id, row] : bus_by_id) {
    index[id] = nodes.size();
    nodes.push_back(Node{id, -row->pd});
  }

  bool any_gen = false;
  long long first_gen_bus = 0;
  for (const GenRow& g : t.gens) {
    if (!g.in_service) continue;
    auto it = index.find(g.bus);
    if (it == index.end()) throw DanglingReference("generator at unknown bus " + std::to_string(g.bus));
    nodes[it->second].injection += g.pg;
    if (!any_gen) first_gen_bus = g.bus;
    any_gen = true;
  }
  if (!any_gen) throw ParseError("case has no in-service generator");

  // Merge parallel branches; the first occurrence fixes the orientation.
  std::map<std::pair<NodeIndex, NodeIndex>, std::size_t> slot;
  std::vector<Link> links;
  std::vector<double> susceptance;
  for (const BranchRow& br : t.branches) {
    if (!br.in_service) continue;
    auto from = index.find(br.from);
    auto to = index.find(br.to);
    if (from == index.end() || to == index.end()) {
      throw DanglingReference("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                              " references an unknown bus");
    }
    if (br.x == 0.0 || !std::isfinite(br.x)) {
      throw ParseError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) + " has zero reactance");
    }
    if (from->second == to->second) throw ParseError("branch " + std::to_string(br.from) + " is a self-loop");
    const auto key = std::minmax(from->second, to->second);
    auto [it, inserted] = slot.emplace(key, links.size());
    if (inserted) {
      links.push_back(Link{from->second, to->second, std::abs(br.x)});
      susceptance.push_back(1.0 / std::abs(br.x));
    } else {
      susceptance[it->second] += 1.0 / std::abs(br.x);
    }
  }
  for (std::size_t i = 0; i < links.size(); ++i) links[i].reactance = 1.0 / susceptance[i];

  long long slack = first_gen_bus;
  for (const auto& [id, row] : bus_by_id) {
    if (row->type == 3) {
      slack = id;
      break;
    }
  }
  double imbalance = 0.0;
  for (const Node& n : nodes) imbalance += n.injection;
  nodes[index.at(slack)].injection -= imbalance;

  GridTopology topology(std::move(nodes), std::move(links), std::move(case_id));
  if (islands(topology).size() != 1) throw DisconnectedCase("pre-attack grid is not connected");
  return topology;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  if (s == "-0.000000") s = "0.000000";
  return s;
}

}  // namespace

GridTopology parse_case(std::string_view text, std::string case_id) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && text[first] == '{') {
    CaseTables t = parse_json_case(text, case_id);
    return build_topology(t, std::move(case_id));
  }
  return build_topology(parse_matpower(text), std::move(case_id));
}

GridTopology load_case(const std::filesystem::path& path) {
  return parse_case(read_text_file(path), path.stem().string());
}

std::string case_to_json(const GridTopology& topology) {
  json doc;
  doc["format"] = "gridcert-case";
  doc["version"] = 1;
  doc["case_id"] = topology.case_id();
  json buses = json::array();
  json gens = json::array();
  for (const Node& n : topology.nodes()) {
    const bool gen = n.injection > 0.0;
    buses.push_back({{"id", n.bus_id}, {"type", 1}, {"Pd", gen ? 0.0 : -n.injection}});
    if (gen) gens.push_back({{"bus", n.bus_id}, {"Pg", n.injection}, {"status", 1}});
  }
  json branches = json::array();
  for (const Link& l : topology.links()) {
    branches.push_back({{"from", topology.node(l.source).bus_id},
                        {"to", topology.node(l.target).bus_id},
                        {"x", l.reactance},
                        {"status", 1}});
  }
  doc["bus"] = std::move(buses);
  doc["gen"] = std::move(gens);
  doc["branch"] = std::move(branches);
  return doc.dump(1) + "\n";
}

std::string scenario_to_json(const GridTopology& topology, const AttackScenario& scenario) {
  json doc;
  doc["seed"] = scenario.seed;
  doc["case-id"] = topology.case_id();
  doc["policy-version"] = kPolicyVersion;
  json v_h = json::array();
  for (NodeIndex v : scenario.area.nodes) v_h.push_back(topology.node(v).bus_id);
  doc["V_H"] = std::move(v_h);
  doc["F"] = scenario.failed;
  return doc.dump() + "\n";
}

AttackScenario scenario_from_json(const GridTopology& topology, std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("invalid scenario JSON: ") + e.what());
  }
  for (const char* key : {"seed", "V_H", "F"}) {
    if (!doc.is_object() || !doc.contains(key)) throw SchemaError(std::string("scenario lacks '") + key + "'");
  }
  if (doc.contains("policy-version") && doc["policy-version"] != kPolicyVersion) {
    throw SchemaError("unsupported policy version");
  }
  std::map<long long, NodeIndex> index;
  for (NodeIndex v = 0; v < topology.node_count(); ++v) index[topology.node(v).bus_id] = v;
  AttackScenario s;
  try {
    s.seed = doc["seed"].get<std::uint64_t>();
    NodeSet nodes;
    for (long long id : doc["V_H"].get<std::vector<long long>>()) {
      auto it = index.find(id);
      if (it == index.end()) throw DanglingReference("scenario references unknown bus " + std::to_string(id));
      nodes.push_back(it->second);
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    s.area = induced_subgraph(topology, std::move(nodes));
    s.failed = doc["F"].get<LinkSet>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("bad scenario field: ") + e.what());
  }
  std::sort(s.failed.begin(), s.failed.end());
  for (LinkIndex e : s.failed) {
    if (!s.area.contains_link(e)) throw SchemaError("failed link " + std::to_string(e) + " is outside E_H");
  }
  return s;
}

std::string ledger_to_jsonl(const GridTopology& topology, const VerificationLedger& ledger) {
  std::string out;
  for (const LinkVerdict& r : ledger.records) {
    const Link& l = topology.link(r.link);
    json line;
    line["link"] = r.link;
    line["from"] = topology.node(l.source).bus_id;
    line["to"] = topology.node(l.target).bus_id;
    line["estimated"] = r.estimated == LinkState::Failed ? "failed" : "operational";
    line["verified"] = r.verified;
    line["method"] = std::string(method_tag(r.method));
    if (r.witness.size() > 0) line["witness"] = std::vector<double>(r.witness.begin(), r.witness.end());
    out += line.dump();
    out += '\n';
  }
  return out;
}

std::vector<LinkVerdict> ledger_from_jsonl(std::string_view text) {
  std::vector<LinkVerdict> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      LinkVerdict r;
      r.link = j.at("link").get<LinkIndex>();
      const std::string state = j.at("estimated").get<std::string>();
      if (state != "failed" && state != "operational") throw SchemaError("bad estimated state '" + state + "'");
      r.estimated = state == "failed" ? LinkState::Failed : LinkState::Operational;
      r.verified = j.at("verified").get<bool>();
      r.method = parse_method_tag(j.at("method").get<std::string>());
      if (j.contains("witness")) {
        const auto w = j["witness"].get<std::vector<double>>();
        r.witness = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw SchemaError(std::string("bad ledger line: ") + e.what());
    }
  }
  return out;
}

void write_results(const GridTopology& topology, const VerificationLedger& ledger,
                   const std::filesystem::path& path) {
  write_text_file(path, ledger_to_jsonl(topology, ledger));
}

std::vector<LinkVerdict> read_results(const std::filesystem::path& path) {
  return ledger_from_jsonl(read_text_file(path));
}

namespace {

// Column binding: name, writer, reader.
struct Column {
  std::string name;
  std::string (*write)(const MetricsRow&);
  void (*read)(MetricsRow&, const std::string&);
};

std::size_t to_count(const std::string& s) {
  std::size_t used = 0;
  const unsigned long long v = std::stoull(s, &used);
  if (used != s.size()) throw std::invalid_argument(s);
  return static_cast<std::size_t>(v);
}

double to_real(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument(s);
  return v;
}

#define COUNT_COLUMN(f)                                                           \
  Column {                                                                        \
    #f, [](const MetricsRow& r) { return std::to_string(r.f); },                  \
        [](MetricsRow& r, const std::string& s) { r.f = to_count(s); }            \
  }
#define FLAG_COLUMN(f)                                                            \
  Column {                                                                        \
    #f, [](const MetricsRow& r) { return std::string(r.f ? "1" : "0"); },         \
        [](MetricsRow& r, const std::string& s) { r.f = to_count(s) != 0; }       \
  }
#define REAL_COLUMN(f)                                                            \
  Column {                                                                        \
    #f, [](const MetricsRow& r) { return format_double(r.f); },                   \
        [](MetricsRow& r, const std::string& s) { r.f = to_real(s); }             \
  }

const std::vector<Column>& columns() {
  static const std::vector<Column> cols = {
      Column{"mode", [](const MetricsRow& r) { return r.mode; },
             [](MetricsRow& r, const std::string& s) { r.mode = s; }},
      COUNT_COLUMN(failures),
      COUNT_COLUMN(area_index),
      COUNT_COLUMN(failure_index),
      Column{"seed", [](const MetricsRow& r) { return std::to_string(r.seed); },
             [](MetricsRow& r, const std::string& s) { r.seed = std::stoull(s); }},
      COUNT_COLUMN(area_nodes),
      COUNT_COLUMN(area_links),
      FLAG_COLUMN(evaluated),
      FLAG_COLUMN(connected),
      FLAG_COLUMN(error),
      COUNT_COLUMN(non_identifiable),
      COUNT_COLUMN(failed_links),
      COUNT_COLUMN(operational_links),
      COUNT_COLUMN(estimated_failed),
      COUNT_COLUMN(correct_failed),
      COUNT_COLUMN(correct_operational),
      COUNT_COLUMN(testable_failed),
      COUNT_COLUMN(testable_operational),
      COUNT_COLUMN(bridge_failed),
      COUNT_COLUMN(bridge_operational),
      COUNT_COLUMN(verified_failed_alg1),
      COUNT_COLUMN(verified_operational_alg1),
      COUNT_COLUMN(verified_failed_bridge),
      COUNT_COLUMN(verified_operational_bridge),
      COUNT_COLUMN(verified_failed),
      COUNT_COLUMN(verified_operational),
      COUNT_COLUMN(alg2_added),
      COUNT_COLUMN(guaranteed_failed),
      COUNT_COLUMN(guaranteed_operational),
      COUNT_COLUMN(violations),
      COUNT_COLUMN(numerical_failures),
      COUNT_COLUMN(bridge_identifiable),
      COUNT_COLUMN(bridge_exact),
      REAL_COLUMN(identity_residual),
      REAL_COLUMN(precision),
      REAL_COLUMN(recall),
  };
  return cols;
}

#undef COUNT_COLUMN
#undef FLAG_COLUMN
#undef REAL_COLUMN

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  out.push_back(std::move(cell));
  return out;
}

}  // namespace

const std::vector<std::string>& metrics_header() {
  static const std::vector<std::string> header = [] {
    std::vector<std::string> h;
    for (const Column& c : columns()) h.push_back(c.name);
    return h;
  }();
  return header;
}

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::string out;
  const auto& cols = columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i].name;
  out += '\n';
  for (const MetricsRow& r : rows) {
    for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i].write(r);
    out += '\n';
  }
  return out;
}

std::vector<MetricsRow> metrics_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("metrics file is empty");
  if (split_csv_line(line) != metrics_header()) throw SchemaError("unexpected metrics header");
  const auto& cols = columns();
  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != cols.size()) throw SchemaError("wrong field count on line " + std::to_string(line_no));
    MetricsRow r;
    try {
      for (std::size_t i = 0; i < cols.size(); ++i) cols[i].read(r, cells[i]);
    } catch (const std::exception&) {
      throw SchemaError("malformed field on line " + std::to_string(line_no));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_metrics(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  write_text_file(path, metrics_to_csv(rows));
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path) {
  return metrics_from_csv(read_text_file(path));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace gridcert
