#include "riskgraph/record.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "riskgraph/sha256.hpp"

namespace riskgraph {

// Howard Hinnant's branchless civil-date algorithms.
int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = unsigned(y - era * 400);
  const unsigned doy = (153u * unsigned(m + (m > 2 ? -3 : 9)) + 2) / 5 + unsigned(d) - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + int64_t(doe) - 719468;
}

void civil_from_days(int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = unsigned(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int64_t yy = int64_t(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = int(doy - (153 * mp + 2) / 5 + 1);
  m = int(mp + (mp < 10 ? 3 : -9));
  y = int(yy + (m <= 2));
}

int days_in_month(int y, int m) {
  static const int md[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2) {
    bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    return leap ? 29 : 28;
  }
  return md[m - 1];
}

int64_t minutes_from_civil(int y, int mo, int d, int h, int mi) {
  return days_from_civil(y, mo, d) * 1440 + h * 60 + mi;
}

std::string iso_from_minutes(int64_t minutes) {
  int64_t days = minutes >= 0 ? minutes / 1440 : (minutes - 1439) / 1440;
  int rem = int(minutes - days * 1440);
  int y, m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d", y, m, d, rem / 60, rem % 60);
  return buf;
}

int64_t minutes_from_iso(const std::string& iso) {
  int y, mo, d, h, mi;
  if (std::sscanf(iso.c_str(), "%d-%d-%dT%d:%d", &y, &mo, &d, &h, &mi) != 5)
    throw std::invalid_argument("bad timestamp: " + iso);
  if (mo < 1 || mo > 12 || d < 1 || d > days_in_month(y, mo) || h < 0 || h > 23 || mi < 0 ||
      mi > 59)
    throw std::invalid_argument("timestamp fields out of range: " + iso);
  return minutes_from_civil(y, mo, d, h, mi);
}

int month_of_minutes(int64_t minutes) {
  int64_t days = minutes >= 0 ? minutes / 1440 : (minutes - 1439) / 1440;
  int y, m, d;
  civil_from_days(days, y, m, d);
  return m;
}

ordered_json ReportRecord::to_json() const {
  ordered_json j;
  j["id"] = id;
  j["timestamp"] = iso_from_minutes(timestamp);
  j["category"] = category_info(category).id;
  j["district"] = districts()[size_t(district)].id;
  j["risk"] = risk_name(risk);
  ordered_json s = ordered_json::object();
  for (Sensor se : all_sensors()) s[sensor_info(se).id] = sensors[size_t(se)];
  j["sensors"] = s;
  j["alert"] = alert_state_name(alert);
  ordered_json pa;
  pa["type"] = alert_state_name(pre_alert.type);
  pa["lead_hours"] = pre_alert.lead_hours;
  pa["severity"] = severity_name(pre_alert.severity);
  j["pre_alert"] = pa;
  j["drainage"] = drainage_name(drainage);
  j["colocated_count"] = colocated_count;
  return j;
}

ReportRecord ReportRecord::from_json(const ordered_json& j) {
  ReportRecord r;
  j.at("id").get_to(r.id);
  r.timestamp = minutes_from_iso(j.at("timestamp").get<std::string>());
  r.category = category_from_id(j.at("category").get<std::string>());
  r.district = district_from_id(j.at("district").get<std::string>());
  r.risk = risk_from_name(j.at("risk").get<std::string>());
  const auto& s = j.at("sensors");
  for (Sensor se : all_sensors()) s.at(sensor_info(se).id).get_to(r.sensors[size_t(se)]);
  r.alert = alert_state_from_name(j.at("alert").get<std::string>());
  const auto& pa = j.at("pre_alert");
  r.pre_alert.type = alert_state_from_name(pa.at("type").get<std::string>());
  pa.at("lead_hours").get_to(r.pre_alert.lead_hours);
  r.pre_alert.severity = severity_from_name(pa.at("severity").get<std::string>());
  r.drainage = drainage_from_name(j.at("drainage").get<std::string>());
  j.at("colocated_count").get_to(r.colocated_count);
  return r;
}

std::string record_structural_error(const ReportRecord& r) {
  if (r.id < 0) return "negative id";
  if (r.district < 0 || r.district >= kDistrictCount) return "district index out of range";
  for (Sensor s : all_sensors()) {
    const SensorInfo& si = sensor_info(s);
    double v = r.sensors[size_t(s)];
    if (!(v >= si.min && v <= si.max))
      return std::string("sensor ") + si.id + " outside physical bounds";
  }
  if (r.risk == Risk::kLow) {
    if (!r.alert.is_none()) return "low-risk record carries an active alert";
    if (!r.pre_alert.type.is_none() || r.pre_alert.lead_hours != 0 ||
        r.pre_alert.severity != Severity::kNone)
      return "low-risk record carries a pre-alert";
  } else if (r.alert.is_none()) {
    return "medium/high-risk record lacks an active alert";
  }
  if (r.pre_alert.type.is_none()) {
    if (r.pre_alert.lead_hours != 0) return "pre-alert 'none' with non-zero lead time";
    if (r.pre_alert.severity != Severity::kNone) return "pre-alert 'none' with a severity";
  } else {
    if (r.pre_alert.lead_hours <= 0) return "pre-alert without positive lead time";
    if (r.pre_alert.severity != r.pre_alert.type.severity)
      return "pre-alert severity disagrees with its typed state";
    if (r.alert.is_none()) return "pre-alert present without an active alert";
    if (r.pre_alert.type.family != r.alert.family)
      return "pre-alert family differs from active alert family";
    if (int(r.pre_alert.type.severity) > int(r.alert.severity))
      return "pre-alert severity exceeds active alert severity";
  }
  if (r.colocated_count < 0) return "negative colocated_count";
  return "";
}

void write_dataset(const std::string& path, const std::vector<ReportRecord>& records,
                   const DatasetParams& params, const GeneratorConfig& config) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const ReportRecord& r : records) out << r.to_json().dump() << "\n";
  }
  ordered_json meta;
  meta["format"] = "riskgraph-dataset-v1";
  meta["params"] = params.to_json();
  meta["config"] = config.to_json();
  meta["config_hash"] = config.hash();
  meta["record_count"] = records.size();
  std::array<int64_t, kRiskCount> by_risk{};
  for (const ReportRecord& r : records) by_risk[size_t(r.risk)]++;
  ordered_json rc;
  for (int i = 0; i < kRiskCount; ++i) rc[risk_name(Risk(i))] = by_risk[size_t(i)];
  meta["risk_counts"] = rc;
  meta["data_sha256"] = sha256_file_hex(path);
  std::ofstream mout(path + ".meta.json", std::ios::binary);
  if (!mout) throw std::runtime_error("cannot write " + path + ".meta.json");
  mout << meta.dump(2) << "\n";
}

std::vector<ReportRecord> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path);
  std::vector<ReportRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(ReportRecord::from_json(ordered_json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": bad record: " + e.what());
    }
  }
  return out;
}

std::string dataset_file_hash(const std::string& path) { return sha256_file_hex(path); }

}  // namespace riskgraph
