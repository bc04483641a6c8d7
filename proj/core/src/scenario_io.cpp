// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <set>
#include <sstream>

#include "bsesprit/errors.hpp"
#include "scenario_json.hpp"

namespace bsesprit {

namespace detail {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorCode::config_error, msg); }

Vec3 read_vec3(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 3) fail(std::string(key) + " must be a 3-element array");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) fail(std::string(key) + " entries must be numbers");
    v(i) = j[i].get<double>();
  }
  return v;
}

template <std::size_t N>
std::array<int, N> read_counts(const json& j, const char* key) {
  if (!j.is_array() || j.size() != N) {
    fail(std::string(key) + " must have " + std::to_string(N) + " entries");
  }
  std::array<int, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!j[i].is_number_integer()) fail(std::string(key) + " entries must be integers");
    out[i] = j[i].get<int>();
  }
  return out;
}

double read_number(const json& j, const char* key) {
  if (!j.is_number()) fail(std::string(key) + " must be a number");
  return j.get<double>();
}

void read_beam_side(const json& j, BeamConfig& cfg, const char* side) {
  if (!j.is_string()) fail(std::string("beam_kind.") + side + " must be a string");
  try {
    cfg.kind = beam_kind_from_string(j.get<std::string>());
  } catch (const Error& e) {
    fail(e.what());
  }
}

std::array<double, 2> read_pair(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 2) fail(std::string(key) + " must have 2 entries");
  return {read_number(j[0], key), read_number(j[1], key)};
}

}  // namespace

Scenario scenario_from_json_value(const json& j) {
  if (!j.is_object()) fail("scenario must be a JSON object");
  static const std::set<std::string> known = {
      "carrier_hz", "delta_f_hz", "m",           "n",          "n_p",        "n_c",
      "e_s",        "n0",         "p_t",         "p_r",        "scatterers", "beam_kind",
      "beam_focus", "custom_grid", "seed",       "los_power",  "nlos_power", "tx_facing",
      "rx_facing",  "noise_mode"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) fail("unknown scenario key '" + it.key() + "'");
  }
  Scenario sc;
  if (j.contains("carrier_hz")) sc.f_c = read_number(j["carrier_hz"], "carrier_hz");
  if (j.contains("delta_f_hz")) sc.delta_f = read_number(j["delta_f_hz"], "delta_f_hz");
  if (j.contains("m")) sc.m = read_counts<5>(j["m"], "m");
  if (j.contains("n")) sc.n = read_counts<4>(j["n"], "n");
  if (j.contains("n_p")) {
    if (!j["n_p"].is_number_integer()) fail("n_p must be an integer");
    sc.n_p = j["n_p"].get<int>();
  }
  if (j.contains("n_c")) {
    if (!j["n_c"].is_number_integer()) fail("n_c must be an integer");
    sc.n_c = j["n_c"].get<int>();
  }
  if (j.contains("e_s")) sc.e_s = read_number(j["e_s"], "e_s");
  if (j.contains("n0")) sc.n0 = read_number(j["n0"], "n0");
  if (j.contains("p_t")) sc.p_t = read_vec3(j["p_t"], "p_t");
  if (j.contains("p_r")) sc.p_r = read_vec3(j["p_r"], "p_r");
  if (j.contains("scatterers")) {
    if (!j["scatterers"].is_array()) fail("scatterers must be an array of 3-vectors");
    sc.scatterers.clear();
    for (const auto& s : j["scatterers"]) sc.scatterers.push_back(read_vec3(s, "scatterers[]"));
  }
  if (j.contains("beam_kind")) {
    const json& bk = j["beam_kind"];
    if (bk.is_string()) {
      read_beam_side(bk, sc.tx_beams, "tx");
      sc.rx_beams.kind = sc.tx_beams.kind;
    } else if (bk.is_object()) {
      if (bk.contains("tx")) read_beam_side(bk["tx"], sc.tx_beams, "tx");
      if (bk.contains("rx")) read_beam_side(bk["rx"], sc.rx_beams, "rx");
    } else {
      fail("beam_kind must be a string or {tx, rx} object");
    }
  }
  if (j.contains("beam_focus")) {
    const json& bf = j["beam_focus"];
    if (!bf.is_object()) fail("beam_focus must be a {tx, rx} object");
    if (bf.contains("tx")) sc.tx_beams.focus = read_pair(bf["tx"], "beam_focus.tx");
    if (bf.contains("rx")) sc.rx_beams.focus = read_pair(bf["rx"], "beam_focus.rx");
  }
  if (j.contains("custom_grid")) {
    const json& cg = j["custom_grid"];
    if (!cg.is_object()) fail("custom_grid must be a {tx, rx} object");
    for (const char* side : {"tx", "rx"}) {
      if (!cg.contains(side)) continue;
      BeamConfig& cfg = std::string(side) == "tx" ? sc.tx_beams : sc.rx_beams;
      const json& g = cg[side];
      if (!g.is_array() || g.size() != 2) fail("custom_grid side must hold 2 grids");
      for (std::size_t d = 0; d < 2; ++d) {
        if (!g[d].is_array()) fail("custom_grid entries must be arrays");
        cfg.custom_grid[d].clear();
        for (const auto& x : g[d]) cfg.custom_grid[d].push_back(read_number(x, "custom_grid"));
      }
    }
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer()) {
      fail("seed must be a nonnegative integer");
    }
    sc.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("los_power")) sc.los_power = read_number(j["los_power"], "los_power");
  if (j.contains("nlos_power")) sc.nlos_power = read_number(j["nlos_power"], "nlos_power");
  if (j.contains("tx_facing")) sc.tx_facing = static_cast<int>(read_number(j["tx_facing"], "tx_facing"));
  if (j.contains("rx_facing")) sc.rx_facing = static_cast<int>(read_number(j["rx_facing"], "rx_facing"));
  if (j.contains("noise_mode")) {
    const std::string nm = j["noise_mode"].is_string() ? j["noise_mode"].get<std::string>() : "";
    if (nm == "direct") {
      sc.noise_mode = NoiseMode::direct;
    } else if (nm == "pilot") {
      sc.noise_mode = NoiseMode::pilot;
    } else {
      fail("noise_mode must be 'direct' or 'pilot'");
    }
  }
  validate_scenario(sc);
  return sc;
}

void validate_scenario(const Scenario& sc) {
  if (!(sc.f_c > 0.0)) fail("carrier_hz must be positive");
  if (!(sc.delta_f > 0.0)) fail("delta_f_hz must be positive");
  for (int d = 0; d < 5; ++d) {
    if (sc.m[d] < 2) fail("every m entry must be >= 2");
  }
  for (int d = 0; d < 4; ++d) {
    if (sc.n[d] < 1) fail("every n entry must be >= 1");
    const BeamConfig& cfg = d < 2 ? sc.tx_beams : sc.rx_beams;
    if (sc.n[d] > sc.m[d]) fail("n exceeds m; hybrid transforms are only available via the library");
    if (sc.n[d] < 3) fail("beamspace restoration needs at least 3 beams per dimension");
    if (cfg.kind == BeamKind::custom &&
        static_cast<int>(cfg.custom_grid[static_cast<std::size_t>(d % 2)].size()) != sc.n[d]) {
      fail("custom_grid sizes must match n");
    }
  }
  if (sc.n_p < sc.n[0] * sc.n[1]) fail("n_p must be >= n1*n2");
  if (sc.n_c < sc.n_p) fail("n_c must be >= n_p");
  if (!(sc.e_s > 0.0)) fail("e_s must be positive");
  if (!(sc.n0 >= 0.0)) fail("n0 must be nonnegative");
  if (!(sc.los_power > 0.0) || !(sc.nlos_power > 0.0)) fail("path powers must be positive");
  if (sc.tx_facing < -1 || sc.tx_facing > 1 || sc.rx_facing < -1 || sc.rx_facing > 1) {
    fail("facing must be -1, 0 (auto) or 1");
  }
  if ((sc.p_t - sc.p_r).norm() <= 0.0) fail("p_t and p_r coincide");
}

nlohmann::json scenario_to_json_value(const Scenario& sc) {
  auto vec = [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); };
  json j;
  j["carrier_hz"] = sc.f_c;
  j["delta_f_hz"] = sc.delta_f;
  j["m"] = sc.m;
  j["n"] = sc.n;
  j["n_p"] = sc.n_p;
  j["n_c"] = sc.n_c;
  j["e_s"] = sc.e_s;
  j["n0"] = sc.n0;
  j["p_t"] = vec(sc.p_t);
  j["p_r"] = vec(sc.p_r);
  j["scatterers"] = json::array();
  for (const auto& s : sc.scatterers) j["scatterers"].push_back(vec(s));
  j["beam_kind"] = {{"tx", to_string(sc.tx_beams.kind)}, {"rx", to_string(sc.rx_beams.kind)}};
  j["seed"] = sc.seed;
  j["los_power"] = sc.los_power;
  j["nlos_power"] = sc.nlos_power;
  j["tx_facing"] = sc.tx_facing;
  j["rx_facing"] = sc.rx_facing;
  j["noise_mode"] = sc.noise_mode == NoiseMode::pilot ? "pilot" : "direct";
  return j;
}

}  // namespace detail

Scenario scenario_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::config_error, std::string("malformed JSON: ") + e.what());
  }
  return detail::scenario_from_json_value(j);
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config_error, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(ss.str());
}

std::string scenario_to_json(const Scenario& sc) {
  return detail::scenario_to_json_value(sc).dump(2);
}

}  // namespace bsesprit
