#include <doctest.h>

#include <complex>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "ccsoc/error.hpp"
#include "ccsoc/network.hpp"

using namespace ccsoc;

namespace {

std::string data_path(const std::string& name) { return std::string(CCSOC_TEST_DATA) + "/" + name; }

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Raw numeric rows of one mpc table, comments stripped.
std::vector<std::vector<double>> raw_table(const std::string& text, const std::string& name) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  bool inside = false;
  while (std::getline(in, line)) {
    if (auto pct = line.find('%'); pct != std::string::npos) line.resize(pct);
    if (!inside) {
      if (line.find("mpc." + name + " ") != std::string::npos &&
          line.find('[') != std::string::npos)
        inside = true;
      continue;
    }
    if (line.find(']') != std::string::npos) break;
    for (auto& ch : line) {
      if (ch == ';') ch = ' ';
    }
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!row.empty()) rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_CASE("two-bus case parses into per-unit quantities") {
  auto net = load_case(data_path("case2.m"));
  CHECK(net.num_buses() == 2);
  CHECK(net.num_branches() == 1);
  CHECK(net.generators.size() == 1);
  CHECK(net.buses[0].kind == BusKind::Slack);
  CHECK(net.buses[1].kind == BusKind::PQ);
  CHECK(net.buses[1].p_load == doctest::Approx(0.5));
  CHECK(net.buses[1].q_load == doctest::Approx(0.2));
  CHECK(net.generators[0].cost_linear == 20.0);
  CHECK(net.slack_bus() == 0);
  CHECK(net.is_radial());
}

TEST_CASE("case118 counts match the raw tables") {
  const auto text = read_file(data_path("case118_linear.m"));
  const auto bus = raw_table(text, "bus");
  const auto gen = raw_table(text, "gen");
  const auto branch = raw_table(text, "branch");
  std::size_t gens_in_service = 0, branches_in_service = 0;
  for (const auto& g : gen) gens_in_service += g[7] > 0;
  for (const auto& b : branch) branches_in_service += b[10] > 0;

  auto net = parse_case(text, "case118");
  CHECK(net.num_buses() == bus.size());
  CHECK(net.num_branches() == branches_in_service);
  CHECK(net.generators.size() == gens_in_service);
  CHECK(net.num_buses() == 118);
  CHECK(net.num_branches() == 186);
  CHECK(net.generators.size() == 54);
  CHECK_FALSE(net.is_radial());
  CHECK(net.variant.find("linearized") != std::string::npos);
}

TEST_CASE("MW values equal per-unit values times base") {
  const auto text = read_file(data_path("case118_linear.m"));
  const auto bus = raw_table(text, "bus");
  auto net = parse_case(text);
  for (std::size_t r = 0; r < bus.size(); ++r) {
    const auto& b = net.buses[net.index_of(static_cast<int>(bus[r][0]))];
    CHECK(b.p_load * net.base_mva == doctest::Approx(bus[r][2]).epsilon(1e-12));
    CHECK(b.q_load * net.base_mva == doctest::Approx(bus[r][3]).epsilon(1e-12));
  }
}

TEST_CASE("bus relabeling is a bijection") {
  auto net = load_case(data_path("case118_linear.m"));
  std::vector<bool> seen(net.num_buses(), false);
  for (const auto& [label, idx] : net.bus_index) {
    REQUIRE(idx < net.num_buses());
    CHECK_FALSE(seen[idx]);
    seen[idx] = true;
    CHECK(net.buses[idx].id == label);
  }
}

TEST_CASE("dangling branch reference is rejected") {
  auto text = read_file(data_path("case2.m"));
  auto pos = text.find("\t1\t2\t0\t0.1");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 4, "\t1\t999");
  CHECK_THROWS_AS(parse_case(text), ValidationError);
}

TEST_CASE("malformed entries name row and column") {
  auto text = read_file(data_path("case2.m"));
  auto pos = text.find("50\t20\t0");
  text.replace(pos, 2, "5x");
  try {
    parse_case(text);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("column 3") != std::string::npos);
  }
}

TEST_CASE("missing slack and islands are validation errors") {
  auto text = read_file(data_path("case2.m"));
  auto no_slack = text;
  no_slack.replace(no_slack.find("\t1\t3\t0"), 6, "\t1\t2\t0");
  CHECK_THROWS_AS(parse_case(no_slack), ValidationError);

  auto island = read_file(data_path("case3_triangle.m"));
  // Drop both branches touching bus 3.
  island.replace(island.find("\t1\t3\t0\t0.1\t0\t0\t0\t0\t0\t0\t1"),
                 std::string("\t1\t3\t0\t0.1\t0\t0\t0\t0\t0\t0\t1").size(),
                 "\t1\t3\t0\t0.1\t0\t0\t0\t0\t0\t0\t0");
  island.replace(island.find("\t2\t3\t0\t0.1\t0\t0\t0\t0\t0\t0\t1"),
                 std::string("\t2\t3\t0\t0.1\t0\t0\t0\t0\t0\t0\t1").size(),
                 "\t2\t3\t0\t0.1\t0\t0\t0\t0\t0\t0\t0");
  try {
    parse_case(island);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("{3}") != std::string::npos);
  }
}

TEST_CASE("quadratic cost rows are rejected") {
  auto text = read_file(data_path("case2.m"));
  text.replace(text.find("2\t0\t0\t2\t20\t0"), 12, "2\t0\t0\t3\t0.1\t20\t0");
  CHECK_THROWS_AS(parse_case(text), ParseError);
}

TEST_CASE("write_case round trips") {
  auto net = load_case(data_path("case118_linear.m"));
  auto again = parse_case(write_case(net), net.name);
  CHECK(case_to_json(again) == case_to_json(net));
}

TEST_CASE("modifiers scale ratings and add wind") {
  auto net = load_case(data_path("case2.m"));
  auto same = apply_modifiers(net, 1.0, {});
  CHECK(case_to_json(same) == case_to_json(net));

  net.branches[0].s_rating = 1.0;
  auto scaled = apply_modifiers(net, 0.7, {});
  CHECK(scaled.branches[0].s_rating == doctest::Approx(0.7));

  auto net118 = load_case(data_path("case118_linear.m"));
  std::vector<WindAddition> wind{{5, 300.0, 30.0, 0.95}, {64, 600.0, 60.0, 0.95}};
  auto with_wind = apply_modifiers(net118, 0.7, wind);
  REQUIRE(with_wind.wind_farms.size() == 2);
  CHECK(with_wind.wind_farms[0].p_forecast == doctest::Approx(3.0));
  CHECK(with_wind.wind_farms[1].p_forecast == doctest::Approx(6.0));
  CHECK(with_wind.buses[with_wind.wind_farms[1].bus].id == 64);

  std::vector<WindAddition> bad{{999, 10.0, 1.0, 0.95}};
  CHECK_THROWS_AS(apply_modifiers(net118, 1.0, bad), ValidationError);
  CHECK_THROWS_AS(apply_modifiers(net118, 0.0, {}), ValidationError);
}

TEST_CASE("series admittance of a pure reactance") {
  auto net = load_case(data_path("case2.m"));
  auto y = branch_admittances(net);
  CHECK(y.branches[0].g == doctest::Approx(0.0));
  CHECK(y.branches[0].b == doctest::Approx(-10.0));

  net.branches[0].b_sh = 0.02;
  auto y2 = branch_admittances(net);
  CHECK(y2.b_diag[0] - y.b_diag[0] == doctest::Approx(0.01));
  CHECK(y2.b_diag[1] - y.b_diag[1] == doctest::Approx(0.01));
}

TEST_CASE("case118 self admittances match a directly assembled Y-bus") {
  const auto text = read_file(data_path("case118_linear.m"));
  const double base = 100.0;
  const auto bus = raw_table(text, "bus");
  const auto branch = raw_table(text, "branch");
  std::map<int, std::size_t> idx;
  for (std::size_t r = 0; r < bus.size(); ++r) idx[static_cast<int>(bus[r][0])] = r;
  const std::size_t n = bus.size();
  std::vector<std::complex<double>> ybus(n * n);
  for (std::size_t r = 0; r < n; ++r) ybus[r * n + r] += std::complex<double>(bus[r][4] / base, bus[r][5] / base);
  for (const auto& br : branch) {
    if (br[10] <= 0) continue;
    const auto f = idx.at(static_cast<int>(br[0]));
    const auto t = idx.at(static_cast<int>(br[1]));
    const std::complex<double> ys = 1.0 / std::complex<double>(br[2], br[3]);
    const std::complex<double> ysh(0.0, br[4] / 2.0);
    ybus[f * n + f] += ys + ysh;
    ybus[t * n + t] += ys + ysh;
    ybus[f * n + t] -= ys;
    ybus[t * n + f] -= ys;
  }

  auto net = parse_case(text);
  auto y = branch_admittances(net);
  for (std::size_t r = 0; r < n; ++r) {
    const auto i = net.index_of(static_cast<int>(bus[r][0]));
    CHECK(y.g_diag[i] == doctest::Approx(ybus[r * n + r].real()).epsilon(1e-12));
    CHECK(y.b_diag[i] == doctest::Approx(ybus[r * n + r].imag()).epsilon(1e-12));
  }
  for (std::size_t l = 0; l < net.num_branches(); ++l) {
    const auto& br = net.branches[l];
    const auto f = static_cast<std::size_t>(idx.at(net.buses[br.from_bus].id));
    const auto t = static_cast<std::size_t>(idx.at(net.buses[br.to_bus].id));
    // Parallel circuits share one Y-bus entry, so compare only single circuits.
    std::size_t parallel = 0;
    for (const auto& other : net.branches) {
      parallel += (other.from_bus == br.from_bus && other.to_bus == br.to_bus) ||
                  (other.from_bus == br.to_bus && other.to_bus == br.from_bus);
    }
    if (parallel > 1) continue;
    CHECK(y.branches[l].g == doctest::Approx(-ybus[f * n + t].real()).epsilon(1e-12));
    CHECK(y.branches[l].b == doctest::Approx(-ybus[f * n + t].imag()).epsilon(1e-12));
  }
}

TEST_CASE("JSON dump records the variant and units") {
  auto net = load_case(data_path("case118_linear.m"));
  auto j = case_to_json(net);
  CHECK(j["metadata"]["counts"]["buses"] == 118);
  CHECK(j["metadata"]["variant"].get<std::string>() == net.variant);
}
