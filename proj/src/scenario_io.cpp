#include "icl/scenario_io.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace icl
{

using nlohmann::json;

namespace
{

[[noreturn]] void fail(const std::string &path, const std::string &what)
{
  throw Error("scenario" + path + ": " + what);
}

void reject_unknown(const json &obj, const std::string &path, const std::set<std::string> &allowed)
{
  if (!obj.is_object())
    fail(path, "expected an object");
  for (const auto &[key, _] : obj.items())
    if (!allowed.count(key))
      fail(path + "." + key, "unknown key");
}

double number(const json &obj, const std::string &key, const std::string &path)
{
  if (!obj.contains(key))
    fail(path + "." + key, "missing");
  const json &v = obj.at(key);
  if (!v.is_number())
    fail(path + "." + key, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d))
    fail(path + "." + key, "must be finite");
  return d;
}

double number_or(const json &obj, const std::string &key, const std::string &path, double fallback)
{
  return obj.contains(key) ? number(obj, key, path) : fallback;
}

Position3 position(const json &v, const std::string &path)
{
  if (!v.is_array() || v.size() != 3)
    fail(path, "expected [x, y, h]");
  for (std::size_t i = 0; i < 3; ++i)
    if (!v[i].is_number())
      fail(path + "[" + std::to_string(i) + "]", "expected a number");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

json position_json(const Position3 &p)
{
  return json::array({p.x, p.y, p.h});
}

} // namespace

ScenarioConfig scenario_from_json(const json &doc)
{
  reject_unknown(doc, "",
                 {"bs", "users", "channel", "p_max_w", "r_th_bps", "uav_pos_power_w", "zeta", "accuracy_overrides",
                  "h_min_m", "h_max_m", "seed"});
  ScenarioConfig cfg;

  if (!doc.contains("bs"))
    fail(".bs", "missing");
  const json &bs = doc.at("bs");
  if (!bs.is_array() || bs.size() != 3)
    fail(".bs", "expected exactly 3 base stations");
  for (std::size_t i = 0; i < 3; ++i)
    cfg.bs[i] = position(bs[i], ".bs[" + std::to_string(i) + "]");

  if (!doc.contains("users"))
    fail(".users", "missing");
  const json &users = doc.at("users");
  if (!users.is_array() || users.empty())
    fail(".users", "expected a non-empty array");
  for (std::size_t i = 0; i < users.size(); ++i)
    cfg.users.push_back(position(users[i], ".users[" + std::to_string(i) + "]"));

  if (!doc.contains("channel"))
    fail(".channel", "missing");
  const json &ch = doc.at("channel");
  reject_unknown(ch, ".channel",
                 {"beta_db", "iota_g", "iota_a", "omega_g", "omega_a", "eps_out", "n0_dbm_per_hz", "b_comm_hz",
                  "b_pos_hz", "psi_s2", "sigma_nlos2_s2"});
  cfg.channel.beta = std::pow(10.0, number(ch, "beta_db", ".channel") / 10.0);
  cfg.channel.iota_g = number(ch, "iota_g", ".channel");
  cfg.channel.iota_a = number(ch, "iota_a", ".channel");
  cfg.channel.omega_g = number(ch, "omega_g", ".channel");
  cfg.channel.omega_a = number(ch, "omega_a", ".channel");
  cfg.channel.eps_out = number(ch, "eps_out", ".channel");
  cfg.channel.n0 = std::pow(10.0, (number(ch, "n0_dbm_per_hz", ".channel") - 30.0) / 10.0);
  cfg.channel.b_comm = number(ch, "b_comm_hz", ".channel");
  cfg.channel.b_pos = number(ch, "b_pos_hz", ".channel");
  cfg.channel.psi = number(ch, "psi_s2", ".channel");
  cfg.channel.sigma_nlos2 = number(ch, "sigma_nlos2_s2", ".channel");

  cfg.p_max = number(doc, "p_max_w", "");
  if (!(cfg.p_max > 0.0))
    fail(".p_max_w", "must be > 0");
  cfg.r_th = number(doc, "r_th_bps", "");
  cfg.uav_pos_power = number(doc, "uav_pos_power_w", "");
  cfg.zeta = number(doc, "zeta", "");
  cfg.h_min = number_or(doc, "h_min_m", "", cfg.h_min);
  cfg.h_max = number_or(doc, "h_max_m", "", cfg.h_max);
  if (doc.contains("seed"))
  {
    if (!doc.at("seed").is_number_unsigned())
      fail(".seed", "expected a nonnegative integer");
    cfg.seed = doc.at("seed").get<unsigned long long>();
  }
  if (doc.contains("accuracy_overrides") && !doc.at("accuracy_overrides").is_null())
  {
    const json &ov = doc.at("accuracy_overrides");
    if (!ov.is_array())
      fail(".accuracy_overrides", "expected an array or null");
    std::vector<double> v;
    for (std::size_t i = 0; i < ov.size(); ++i)
    {
      if (!ov[i].is_number())
        fail(".accuracy_overrides[" + std::to_string(i) + "]", "expected a number");
      v.push_back(ov[i].get<double>());
    }
    cfg.accuracy_overrides = v;
  }

  try
  {
    cfg.validate();
  }
  catch (const Error &e)
  {
    fail("", e.what());
  }
  return cfg;
}

json scenario_to_json(const ScenarioConfig &cfg)
{
  json doc;
  doc["bs"] = json::array();
  for (const auto &b : cfg.bs)
    doc["bs"].push_back(position_json(b));
  doc["users"] = json::array();
  for (const auto &w : cfg.users)
    doc["users"].push_back(position_json(w));
  const ChannelParams &ch = cfg.channel;
  doc["channel"] = {{"beta_db", 10.0 * std::log10(ch.beta)},
                    {"iota_g", ch.iota_g},
                    {"iota_a", ch.iota_a},
                    {"omega_g", ch.omega_g},
                    {"omega_a", ch.omega_a},
                    {"eps_out", ch.eps_out},
                    {"n0_dbm_per_hz", 10.0 * std::log10(ch.n0) + 30.0},
                    {"b_comm_hz", ch.b_comm},
                    {"b_pos_hz", ch.b_pos},
                    {"psi_s2", ch.psi},
                    {"sigma_nlos2_s2", ch.sigma_nlos2}};
  doc["p_max_w"] = cfg.p_max;
  doc["r_th_bps"] = cfg.r_th;
  doc["uav_pos_power_w"] = cfg.uav_pos_power;
  doc["zeta"] = cfg.zeta;
  doc["h_min_m"] = cfg.h_min;
  doc["h_max_m"] = cfg.h_max;
  doc["seed"] = cfg.seed;
  doc["accuracy_overrides"] = cfg.accuracy_overrides ? json(*cfg.accuracy_overrides) : json(nullptr);
  return doc;
}

ScenarioConfig load_scenario(const std::filesystem::path &path)
{
  std::ifstream in(path);
  if (!in)
    throw Error("cannot open scenario file " + path.string());
  json doc;
  try
  {
    doc = json::parse(in);
  }
  catch (const json::parse_error &e)
  {
    throw Error("scenario " + path.string() + ": " + e.what());
  }
  return scenario_from_json(doc);
}

ScenarioConfig reference_scenario()
{
  ScenarioConfig cfg;
  cfg.bs = {Position3{-400, -350, 10}, Position3{-450, 400, 10}, Position3{350, 250, 10}};
  cfg.users = {{-60, -110, 12}, {150, -70, 29}, {-350, 30, 22}, {-140, -60, 26},
               {-250, 130, 15}, {-280, -210, 17}, {-220, 260, 32}};
  ChannelParams &ch = cfg.channel;
  ch.beta = std::pow(10.0, -3.889);
  ch.iota_g = 2.3;
  ch.iota_a = 2.0;
  ch.omega_g = 1.0;
  ch.omega_a = 0.2;
  ch.eps_out = 0.1;
  ch.n0 = std::pow(10.0, -18.7);
  ch.b_comm = 1e6;
  ch.b_pos = 1.8e5;
  ch.psi = 5.8e-16;
  ch.sigma_nlos2 = 6e-18;
  cfg.p_max = 1.0;
  cfg.r_th = 2.5e6;
  cfg.uav_pos_power = 0.2;
  cfg.zeta = 0.7;
  cfg.validate();
  return cfg;
}

} // namespace icl
