#include <cctype>
#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>

#include "ccsoc/error.hpp"
#include "ccsoc/network.hpp"

namespace ccsoc {
namespace {

constexpr int kMatpowerRef = 3;
constexpr int kMatpowerPV = 2;
constexpr int kMatpowerPQ = 1;

struct Table {
  std::vector<std::vector<double>> rows;
};

std::string strip_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_comment = false;
  bool in_string = false;
  for (char ch : text) {
    if (ch == '\n') {
      in_comment = false;
      in_string = false;
      out.push_back(ch);
      continue;
    }
    if (in_comment) continue;
    if (ch == '\'') in_string = !in_string;
    if (ch == '%' && !in_string) {
      in_comment = true;
      continue;
    }
    out.push_back(ch);
  }
  return out;
}

// Locates `mpc.<name> =` and returns the text right after '='.
std::optional<std::size_t> find_assignment(const std::string& text, std::string_view name) {
  const std::string key = "mpc." + std::string(name);
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    std::size_t after = pos + key.size();
    if (after < text.size() && (std::isalnum(static_cast<unsigned char>(text[after])) ||
                                text[after] == '_')) {
      pos = after;
      continue;
    }
    while (after < text.size() && std::isspace(static_cast<unsigned char>(text[after]))) ++after;
    if (after < text.size() && text[after] == '=') return after + 1;
    pos = after;
  }
  return std::nullopt;
}

double parse_number(std::string_view token, std::string_view table, std::size_t row,
                    std::size_t col) {
  double value = 0.0;
  if (token == "Inf" || token == "inf") return std::numeric_limits<double>::infinity();
  if (token == "-Inf" || token == "-inf") return -std::numeric_limits<double>::infinity();
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    std::ostringstream msg;
    msg << "mpc." << table << ": cannot parse '" << token << "' at row " << row + 1
        << ", column " << col + 1;
    throw ParseError(msg.str());
  }
  return value;
}

Table parse_matrix(const std::string& text, std::string_view name, bool required = true) {
  Table table;
  auto start = find_assignment(text, name);
  if (!start) {
    if (required) throw ParseError("missing table mpc." + std::string(name));
    return table;
  }
  std::size_t open = text.find('[', *start);
  std::size_t close = text.find(']', *start);
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw ParseError("mpc." + std::string(name) + " is not a bracketed matrix");
  }
  std::string body = text.substr(open + 1, close - open - 1);

  std::vector<double> row;
  std::string token;
  auto flush_token = [&] {
    if (!token.empty()) {
      row.push_back(parse_number(token, name, table.rows.size(), row.size()));
      token.clear();
    }
  };
  auto flush_row = [&] {
    flush_token();
    if (!row.empty()) {
      if (!table.rows.empty() && row.size() != table.rows.front().size()) {
        std::ostringstream msg;
        msg << "mpc." << name << ": row " << table.rows.size() + 1 << " has " << row.size()
            << " columns, expected " << table.rows.front().size();
        throw ParseError(msg.str());
      }
      table.rows.push_back(std::move(row));
      row.clear();
    }
  };
  for (char ch : body) {
    if (ch == ';' || ch == '\n') {
      flush_row();
    } else if (std::isspace(static_cast<unsigned char>(ch)) || ch == ',') {
      flush_token();
    } else {
      token.push_back(ch);
    }
  }
  flush_row();
  return table;
}

double parse_scalar(const std::string& text, std::string_view name) {
  auto start = find_assignment(text, name);
  if (!start) throw ParseError("missing scalar mpc." + std::string(name));
  std::size_t end = text.find(';', *start);
  std::string token = text.substr(*start, end == std::string::npos ? std::string::npos
                                                                    : end - *start);
  std::size_t first = token.find_first_not_of(" \t\r\n");
  std::size_t last = token.find_last_not_of(" \t\r\n");
  if (first == std::string::npos) throw ParseError("empty value for mpc." + std::string(name));
  return parse_number(std::string_view(token).substr(first, last - first + 1), name, 0, 0);
}

void require_columns(const Table& t, std::string_view name, std::size_t n) {
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r].size() < n) {
      std::ostringstream msg;
      msg << "mpc." << name << ": row " << r + 1 << " has " << t.rows[r].size()
          << " columns, at least " << n << " required";
      throw ParseError(msg.str());
    }
  }
}

}  // namespace

NetworkCase parse_case(std::string_view raw, std::string name, bool keep_taps) {
  const std::string text = strip_comments(raw);
  NetworkCase net;
  net.name = std::move(name);
  net.variant = "unspecified";
  if (auto pos = raw.find("% Variant:"); pos != std::string_view::npos) {
    auto line = raw.substr(pos + 10);
    line = line.substr(0, line.find('\n'));
    auto first = line.find_first_not_of(" \t");
    auto last = line.find_last_not_of(" \t\r");
    if (first != std::string_view::npos) net.variant = std::string(line.substr(first, last - first + 1));
  }
  net.base_mva = parse_scalar(text, "baseMVA");
  if (!(net.base_mva > 0.0)) throw ParseError("mpc.baseMVA must be positive");
  const double base = net.base_mva;

  Table bus = parse_matrix(text, "bus");
  Table gen = parse_matrix(text, "gen");
  Table branch = parse_matrix(text, "branch");
  Table gencost = parse_matrix(text, "gencost", false);
  require_columns(bus, "bus", 13);
  require_columns(gen, "gen", 10);
  require_columns(branch, "branch", 11);

  std::vector<int> matpower_type;
  for (std::size_t r = 0; r < bus.rows.size(); ++r) {
    const auto& row = bus.rows[r];
    Bus b;
    b.id = static_cast<int>(row[0]);
    const int type = static_cast<int>(row[1]);
    if (type != kMatpowerPQ && type != kMatpowerPV && type != kMatpowerRef) {
      std::ostringstream msg;
      msg << "mpc.bus: unsupported bus type " << type << " at row " << r + 1 << ", column 2";
      throw ParseError(msg.str());
    }
    matpower_type.push_back(type);
    b.p_load = row[2] / base;
    b.q_load = row[3] / base;
    b.g_shunt = row[4] / base;
    b.b_shunt = row[5] / base;
    b.v_set = row[7];
    b.base_kv = row[9];
    b.v_max = row[11];
    b.v_min = row[12];
    if (net.bus_index.count(b.id)) {
      throw ValidationError("duplicate bus label " + std::to_string(b.id));
    }
    net.bus_index.emplace(b.id, net.buses.size());
    net.buses.push_back(b);
  }

  auto resolve = [&](double label, std::string_view table, std::size_t row, std::size_t col) {
    auto it = net.bus_index.find(static_cast<int>(label));
    if (it == net.bus_index.end()) {
      std::ostringstream msg;
      msg << "mpc." << table << ": row " << row + 1 << ", column " << col + 1
          << " references unknown bus " << static_cast<int>(label);
      throw ValidationError(msg.str());
    }
    return it->second;
  };

  if (!gencost.rows.empty() && gencost.rows.size() < gen.rows.size()) {
    throw ParseError("mpc.gencost has fewer rows than mpc.gen");
  }
  for (std::size_t r = 0; r < gen.rows.size(); ++r) {
    const auto& row = gen.rows[r];
    if (row[7] <= 0.0) continue;  // out of service
    Generator g;
    g.bus = resolve(row[0], "gen", r, 0);
    g.p_set = row[1] / base;
    g.q_set = row[2] / base;
    g.q_max = row[3] / base;
    g.q_min = row[4] / base;
    g.v_set = row[5];
    g.p_max = row[8] / base;
    g.p_min = row[9] / base;
    if (!gencost.rows.empty()) {
      const auto& cost = gencost.rows[r];
      if (cost.size() < 4) throw ParseError("mpc.gencost: row " + std::to_string(r + 1) +
                                            " is too short");
      if (static_cast<int>(cost[0]) != 2) {
        throw ParseError("mpc.gencost: row " + std::to_string(r + 1) +
                         " is not polynomial (model 2); only linear costs are supported");
      }
      const auto ncost = static_cast<std::size_t>(cost[3]);
      if (cost.size() < 4 + ncost) {
        throw ParseError("mpc.gencost: row " + std::to_string(r + 1) + " declares " +
                         std::to_string(ncost) + " coefficients but has fewer columns");
      }
      // Coefficients are stored highest degree first.
      for (std::size_t k = 0; k + 2 < ncost; ++k) {
        if (cost[4 + k] != 0.0) {
          throw ParseError("mpc.gencost: row " + std::to_string(r + 1) + ", column " +
                           std::to_string(5 + k) + ": polynomial of degree " +
                           std::to_string(ncost - 1 - k) +
                           " rejected, generator costs must be linear");
        }
      }
      if (ncost >= 2) g.cost_linear = cost[4 + ncost - 2];
      if (ncost >= 1) g.cost_offset = cost[4 + ncost - 1];
    }
    net.generators.push_back(g);
  }

  for (std::size_t r = 0; r < branch.rows.size(); ++r) {
    const auto& row = branch.rows[r];
    if (row[10] <= 0.0) continue;
    Branch br;
    br.label = static_cast<int>(r + 1);
    br.from_bus = resolve(row[0], "branch", r, 0);
    br.to_bus = resolve(row[1], "branch", r, 1);
    br.r = row[2];
    br.x = row[3];
    br.b_sh = row[4];
    br.s_rating = row[5] / base;
    if (keep_taps && row[8] != 0.0) br.tap = row[8];
    if (!(br.tap > 0.0)) throw ValidationError("mpc.branch: row " + std::to_string(r + 1) + " has a negative tap");
    const double z2 = br.r * br.r + br.x * br.x;
    if (z2 <= 0.0) {
      throw ValidationError("mpc.branch: row " + std::to_string(r + 1) +
                            " has zero series impedance");
    }
    br.g = br.r / z2;
    br.b = -br.x / z2;
    net.branches.push_back(br);
  }

  // A PV bus without an in-service generator cannot regulate its voltage.
  std::vector<bool> has_gen(net.buses.size(), false);
  for (const auto& g : net.generators) has_gen[g.bus] = true;
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    switch (matpower_type[i]) {
      case kMatpowerRef: net.buses[i].kind = BusKind::Slack; break;
      case kMatpowerPV: net.buses[i].kind = has_gen[i] ? BusKind::PV : BusKind::PQ; break;
      default: net.buses[i].kind = BusKind::PQ; break;
    }
  }
  for (const auto& g : net.generators) {
    if (net.buses[g.bus].kind != BusKind::PQ) net.buses[g.bus].v_set = g.v_set;
  }

  validate_case(net);
  return net;
}

NetworkCase load_case(const std::filesystem::path& path, bool keep_taps) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open case file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_case(buffer.str(), path.stem().string(), keep_taps);
}

}  // namespace ccsoc
