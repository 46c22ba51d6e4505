#include "dmpes/model_io.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace dmpes {

namespace {

[[noreturn]] void bad(const std::string& message) {
  throw ConfigError(message);
}

void check_keys(const Json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) bad(where + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      bad("unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <class T>
T field(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) bad(where + " is missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    bad("bad value for '" + std::string(key) + "' in " + where + ": " +
        e.what());
  }
}

template <class T>
T field_or(const Json& j, const char* key, const std::string& where, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    bad("bad value for '" + std::string(key) + "' in " + where + ": " +
        e.what());
  }
}

Json vec_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vec_from(const Json& j, const std::string& where) {
  if (!j.is_array()) bad(where + " must be an array of numbers");
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) bad(where + " must be an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Json mat_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

Matrix mat_from(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) bad(where + " must be an array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(j.size(), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      bad(where + " rows must all have the same length");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) bad(where + " entries must be numbers");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          j[i][c].get<double>();
    }
  }
  return m;
}

Group group_from(const std::string& token, const std::string& where) {
  if (token == "treated") return Group::kTreated;
  if (token == "control") return Group::kControl;
  bad("group in " + where + " must be 'treated' or 'control'");
}

Json radial_json(const RadialLaw& law) {
  Json j;
  switch (law.kind) {
    case RadialLaw::Kind::kNormal:
      j["kind"] = "normal";
      break;
    case RadialLaw::Kind::kStudentT:
      j["kind"] = "student-t";
      j["degrees_of_freedom"] = law.degrees_of_freedom;
      break;
    case RadialLaw::Kind::kUniformBall:
      j["kind"] = "uniform-ball";
      break;
  }
  return j;
}

RadialLaw radial_from(const Json& j, const std::string& where) {
  check_keys(j, {"kind", "degrees_of_freedom"}, where + " radial law");
  const std::string kind = field<std::string>(j, "kind", where);
  RadialLaw law;
  if (kind == "normal") {
    law.kind = RadialLaw::Kind::kNormal;
  } else if (kind == "student-t" || kind == "student" || kind == "t") {
    law.kind = RadialLaw::Kind::kStudentT;
    law.degrees_of_freedom =
        field<double>(j, "degrees_of_freedom", where + " radial law");
  } else if (kind == "uniform-ball" || kind == "ball" || kind == "uniform") {
    law.kind = RadialLaw::Kind::kUniformBall;
  } else {
    bad("unknown radial kind '" + kind + "' in " + where);
  }
  return law;
}

std::string dir_of(const std::string& path) {
  const std::size_t slash = path.find_last_of('/');
  return slash == std::string::npos ? std::string(".")
                                    : path.substr(0, slash);
}

std::string join_path(const std::string& base, const std::string& rel) {
  if (!rel.empty() && rel.front() == '/') return rel;
  if (base.empty() || base == ".") return rel;
  return base + "/" + rel;
}

Json group_moments_json(const GroupMoments& gm) {
  Json j;
  j["count"] = gm.count;
  j["mean"] = vec_json(gm.mean);
  if (gm.covariance) j["covariance"] = mat_json(*gm.covariance);
  if (!gm.component_count.empty()) {
    Json comps = Json::object();
    for (const auto& [k, n] : gm.component_count) {
      Json jc;
      jc["count"] = n;
      auto im = gm.component_mean.find(k);
      if (im != gm.component_mean.end()) jc["mean"] = vec_json(im->second);
      auto ic = gm.component_covariance.find(k);
      if (ic != gm.component_covariance.end()) {
        jc["covariance"] = mat_json(ic->second);
      }
      comps[std::to_string(k)] = std::move(jc);
    }
    j["components"] = std::move(comps);
  }
  return j;
}

GroupMoments group_moments_from(const Json& j, const std::string& where) {
  check_keys(j, {"count", "mean", "covariance", "components"}, where);
  GroupMoments gm;
  gm.count = field<int>(j, "count", where);
  gm.mean = vec_from(j.at("mean"), where + " mean");
  if (j.contains("covariance")) {
    gm.covariance = mat_from(j.at("covariance"), where + " covariance");
  }
  if (j.contains("components")) {
    for (const auto& item : j.at("components").items()) {
      const int k = std::stoi(item.key());
      const Json& jc = item.value();
      check_keys(jc, {"count", "mean", "covariance"},
                 where + " component " + item.key());
      gm.component_count[k] = field<int>(jc, "count", where);
      if (jc.contains("mean")) {
        gm.component_mean[k] = vec_from(jc.at("mean"), where + " mean");
      }
      if (jc.contains("covariance")) {
        gm.component_covariance[k] =
            mat_from(jc.at("covariance"), where + " covariance");
      }
    }
  }
  return gm;
}

}  // namespace

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("malformed JSON in '" + path + "': " + e.what());
  }
}

Json to_json(const Model& model) {
  Json j;
  j["dimension"] = model.dimension();
  Json comps = Json::array();
  for (const Component& c : model.components()) {
    Json jc;
    jc["center"] = vec_json(c.center);
    jc["covariance"] = mat_json(c.covariance);
    jc["radial"] = radial_json(c.radial);
    jc["weight"] = c.weight;
    jc["group"] = group_name(c.group);
    comps.push_back(std::move(jc));
  }
  j["components"] = std::move(comps);
  return j;
}

Model model_from_json(const Json& j) {
  check_keys(j, {"dimension", "components"}, "model");
  const int dim = field<int>(j, "dimension", "model");
  if (!j.contains("components") || !j.at("components").is_array()) {
    bad("model needs a 'components' array");
  }
  std::vector<Component> comps;
  int index = 0;
  for (const Json& jc : j.at("components")) {
    const std::string where = "model component " + std::to_string(index++);
    check_keys(jc, {"center", "covariance", "radial", "weight", "group"},
               where);
    Component c;
    c.center = vec_from(jc.at("center"), where + " center");
    c.covariance = mat_from(jc.at("covariance"), where + " covariance");
    c.radial = jc.contains("radial") ? radial_from(jc.at("radial"), where)
                                     : RadialLaw{};
    c.weight = field_or<double>(jc, "weight", where, 1.0);
    c.group = group_from(field<std::string>(jc, "group", where), where);
    comps.push_back(std::move(c));
  }
  return Model(dim, std::move(comps));
}

Json to_json(const ConditionalModel& model) {
  Json j;
  j["dimension"] = model.dimension();
  Json special;
  special["columns"] = model.special_columns();
  special["support"] = mat_json(model.support());
  special["regression"] = mat_json(model.regression());
  j["special"] = std::move(special);
  Json comps = Json::array();
  for (const ConditionalComponent& c : model.components()) {
    Json jc;
    jc["special_probs"] = vec_json(c.special_probs);
    jc["conditional_center"] = vec_json(c.conditional_center);
    jc["conditional_covariance"] = mat_json(c.conditional_covariance);
    jc["radial"] = radial_json(c.radial);
    jc["weight"] = c.weight;
    jc["group"] = group_name(c.group);
    comps.push_back(std::move(jc));
  }
  j["components"] = std::move(comps);
  return j;
}

ConditionalModel conditional_from_json(const Json& j) {
  check_keys(j, {"dimension", "special", "components"}, "conditional model");
  const int dim = field<int>(j, "dimension", "conditional model");
  if (!j.contains("special")) bad("conditional model needs a 'special' block");
  const Json& js = j.at("special");
  check_keys(js, {"columns", "support", "regression"}, "special block");
  const std::vector<int> columns =
      field<std::vector<int>>(js, "columns", "special block");
  const Matrix support = mat_from(js.at("support"), "special support");
  const Matrix regression =
      js.contains("regression")
          ? mat_from(js.at("regression"), "special regression")
          : Matrix::Zero(dim - static_cast<int>(columns.size()),
                         static_cast<Eigen::Index>(columns.size()));
  std::vector<ConditionalComponent> comps;
  int index = 0;
  for (const Json& jc : j.at("components")) {
    const std::string where =
        "conditional component " + std::to_string(index++);
    check_keys(jc,
               {"special_probs", "conditional_center",
                "conditional_covariance", "radial", "weight", "group"},
               where);
    ConditionalComponent c;
    c.special_probs = vec_from(jc.at("special_probs"), where + " probs");
    c.conditional_center =
        vec_from(jc.at("conditional_center"), where + " center");
    c.conditional_covariance =
        mat_from(jc.at("conditional_covariance"), where + " covariance");
    c.radial = jc.contains("radial") ? radial_from(jc.at("radial"), where)
                                     : RadialLaw{};
    c.weight = field_or<double>(jc, "weight", where, 1.0);
    c.group = group_from(field<std::string>(jc, "group", where), where);
    comps.push_back(std::move(c));
  }
  return ConditionalModel(dim, columns, support, regression,
                          std::move(comps));
}

bool is_conditional_model_json(const Json& j) {
  return j.is_object() && j.contains("special");
}

Json to_json(const ExperimentConfig& config) {
  Json j;
  j["name"] = config.name;
  if (config.model) j["model"] = to_json(*config.model);
  if (config.conditional) j["model"] = to_json(*config.conditional);
  Json sizes;
  sizes["treated"] = config.sizes.treated;
  sizes["control"] = config.sizes.control;
  sizes["matched_treated"] = config.sizes.matched_treated;
  sizes["matched_control"] = config.sizes.matched_control;
  j["sizes"] = std::move(sizes);
  Json alloc;
  alloc["kind"] = config.allocation.kind == AllocationRule::Kind::kFixed
                      ? "fixed"
                      : "proportional";
  if (!config.allocation.fixed_counts.empty()) {
    alloc["counts"] = config.allocation.fixed_counts;
  }
  j["allocation"] = std::move(alloc);
  Json methods = Json::array();
  for (const MatchSpec& m : config.methods) {
    Json jm;
    jm["method"] = match_method_name(m.method);
    if (m.matched_treated >= 0) jm["matched_treated"] = m.matched_treated;
    if (m.matched_control >= 0) jm["matched_control"] = m.matched_control;
    jm["caliper_width"] = m.caliper_width;
    if (m.strict_caliper) jm["strict_caliper"] = true;
    if (!m.special_columns.empty()) jm["special_columns"] = m.special_columns;
    if (m.stratum_backfill) jm["stratum_backfill"] = true;
    if (m.method == MatchMethod::kCoordinate) jm["coordinate"] = m.coordinate;
    jm["metric"] =
        m.metric_source == MetricSource::kOracle ? "oracle" : "estimated";
    methods.push_back(std::move(jm));
  }
  j["methods"] = std::move(methods);
  Json dirs;
  dirs["random"] = config.directions.random_count;
  dirs["orthogonal"] = config.directions.orthogonal_count;
  j["directions"] = std::move(dirs);
  Json inv;
  inv["panels"] = config.invariance.panels;
  inv["maps"] = config.invariance.maps;
  inv["treated"] = config.invariance.treated;
  inv["control"] = config.invariance.control;
  j["invariance"] = std::move(inv);
  j["replications"] = config.replications;
  j["seed"] = config.seed;
  Json tol;
  tol["se_multiplier"] = config.tolerance.se_multiplier;
  tol["bootstrap_resamples"] = config.tolerance.bootstrap_resamples;
  tol["exact"] = config.tolerance.exact_tol;
  tol["max_exclusion_fraction"] = config.tolerance.max_exclusion_fraction;
  j["tolerance"] = std::move(tol);
  return j;
}

ExperimentConfig experiment_from_json(const Json& j,
                                      const std::string& base_dir) {
  check_keys(j,
             {"name", "model", "model_path", "sizes", "allocation", "methods",
              "directions", "invariance", "replications", "seed",
              "tolerance"},
             "experiment config");
  ExperimentConfig config;
  config.name = field_or<std::string>(j, "name", "experiment config",
                                      "experiment");

  Json model_json;
  if (j.contains("model") && j.contains("model_path")) {
    bad("experiment config has both 'model' and 'model_path'");
  } else if (j.contains("model")) {
    model_json = j.at("model");
  } else if (j.contains("model_path")) {
    model_json = load_json_file(join_path(
        base_dir, field<std::string>(j, "model_path", "experiment config")));
  } else {
    bad("experiment config needs 'model' or 'model_path'");
  }
  if (is_conditional_model_json(model_json)) {
    config.conditional = conditional_from_json(model_json);
  } else {
    config.model = model_from_json(model_json);
  }

  if (j.contains("sizes")) {
    const Json& js = j.at("sizes");
    check_keys(js, {"treated", "control", "matched_treated",
                    "matched_control"},
               "sizes");
    config.sizes.treated = field<int>(js, "treated", "sizes");
    config.sizes.control = field<int>(js, "control", "sizes");
    config.sizes.matched_treated =
        field_or<int>(js, "matched_treated", "sizes", config.sizes.treated);
    config.sizes.matched_control =
        field_or<int>(js, "matched_control", "sizes",
                      config.sizes.matched_treated);
  }
  if (j.contains("allocation")) {
    const Json& ja = j.at("allocation");
    check_keys(ja, {"kind", "counts"}, "allocation");
    const std::string kind =
        field_or<std::string>(ja, "kind", "allocation", "proportional");
    if (kind == "fixed") {
      config.allocation.kind = AllocationRule::Kind::kFixed;
      config.allocation.fixed_counts =
          field<std::vector<int>>(ja, "counts", "allocation");
    } else if (kind == "proportional") {
      config.allocation.kind = AllocationRule::Kind::kProportional;
    } else {
      bad("allocation kind must be 'proportional' or 'fixed'");
    }
  }
  if (j.contains("methods")) {
    if (!j.at("methods").is_array()) bad("'methods' must be an array");
    int index = 0;
    for (const Json& jm : j.at("methods")) {
      const std::string where = "method " + std::to_string(index++);
      check_keys(jm,
                 {"method", "matched_treated", "matched_control",
                  "caliper_width", "strict_caliper", "special_columns",
                  "stratum_backfill", "coordinate", "metric"},
                 where);
      MatchSpec spec;
      spec.method =
          parse_match_method(field<std::string>(jm, "method", where));
      spec.matched_treated = field_or<int>(jm, "matched_treated", where, -1);
      spec.matched_control = field_or<int>(jm, "matched_control", where, -1);
      spec.caliper_width =
          field_or<double>(jm, "caliper_width", where, spec.caliper_width);
      spec.strict_caliper =
          field_or<bool>(jm, "strict_caliper", where, false);
      spec.special_columns = field_or<std::vector<int>>(
          jm, "special_columns", where, {});
      spec.stratum_backfill =
          field_or<bool>(jm, "stratum_backfill", where, false);
      spec.coordinate = field_or<int>(jm, "coordinate", where, 0);
      const std::string metric =
          field_or<std::string>(jm, "metric", where, "estimated");
      if (metric == "oracle") {
        spec.metric_source = MetricSource::kOracle;
      } else if (metric == "estimated") {
        spec.metric_source = MetricSource::kEstimated;
      } else {
        bad("metric in " + where + " must be 'estimated' or 'oracle'");
      }
      config.methods.push_back(std::move(spec));
    }
  }
  if (config.methods.empty()) {
    config.methods.push_back(MatchSpec{});
  }
  if (j.contains("directions")) {
    const Json& jd = j.at("directions");
    check_keys(jd, {"random", "orthogonal"}, "directions");
    config.directions.random_count =
        field_or<int>(jd, "random", "directions", 20);
    config.directions.orthogonal_count =
        field_or<int>(jd, "orthogonal", "directions", 12);
  }
  if (j.contains("invariance")) {
    const Json& ji = j.at("invariance");
    check_keys(ji, {"panels", "maps", "treated", "control"}, "invariance");
    config.invariance.panels = field_or<int>(ji, "panels", "invariance", 10);
    config.invariance.maps = field_or<int>(ji, "maps", "invariance", 25);
    config.invariance.treated =
        field_or<int>(ji, "treated", "invariance", 50);
    config.invariance.control =
        field_or<int>(ji, "control", "invariance", 150);
  }
  config.replications =
      field_or<int>(j, "replications", "experiment config", 2000);
  config.seed =
      field_or<std::uint64_t>(j, "seed", "experiment config", 7);
  if (j.contains("tolerance")) {
    const Json& jt = j.at("tolerance");
    check_keys(jt,
               {"se_multiplier", "bootstrap_resamples", "exact",
                "max_exclusion_fraction"},
               "tolerance");
    config.tolerance.se_multiplier =
        field_or<double>(jt, "se_multiplier", "tolerance", 3.0);
    config.tolerance.bootstrap_resamples =
        field_or<int>(jt, "bootstrap_resamples", "tolerance", 200);
    config.tolerance.exact_tol =
        field_or<double>(jt, "exact", "tolerance", 1e-10);
    config.tolerance.max_exclusion_fraction =
        field_or<double>(jt, "max_exclusion_fraction", "tolerance", 0.01);
  }
  return config;
}

ExperimentConfig load_experiment(const std::string& path) {
  return experiment_from_json(load_json_file(path), dir_of(path));
}

Json to_json(const ReplicationStats& stats) {
  Json j;
  j["config"] = to_json(stats.config);
  j["design_names"] = stats.design_names;
  j["dim"] = stats.dim;
  j["special_dim"] = stats.special_dim;
  j["sigma2"] = vec_json(stats.sigma2);
  j["delta"] = vec_json(stats.delta);
  j["degenerate_z"] = stats.degenerate_z;
  j["treated_components"] = stats.treated_components;
  j["control_components"] = stats.control_components;
  j["direction_ids"] = stats.direction_ids;
  Json dirs = Json::array();
  for (const Direction& d : stats.directions) {
    dirs.push_back(vec_json(d.is_zero() ? Vector(Vector::Zero(d.dim()))
                                        : d.coefficients()));
  }
  j["directions"] = std::move(dirs);
  j["excluded"] = stats.excluded;
  Json rows = Json::array();
  for (const ReplicationRecord& row : stats.rows) {
    Json jr;
    if (row.excluded) {
      jr["excluded"] = true;
      jr["note"] = row.note;
    } else {
      Json designs = Json::array();
      for (const MomentSummary& ms : row.designs) {
        Json jd;
        jd["treated"] = group_moments_json(ms.treated);
        jd["control"] = group_moments_json(ms.control);
        designs.push_back(std::move(jd));
      }
      jr["designs"] = std::move(designs);
    }
    rows.push_back(std::move(jr));
  }
  j["rows"] = std::move(rows);
  return j;
}

ReplicationStats stats_from_json(const Json& j) {
  check_keys(j,
             {"config", "design_names", "dim", "special_dim", "sigma2",
              "delta", "degenerate_z", "treated_components",
              "control_components", "direction_ids", "directions", "excluded",
              "rows"},
             "replication stats");
  ReplicationStats stats;
  stats.config = experiment_from_json(j.at("config"), ".");
  stats.design_names =
      field<std::vector<std::string>>(j, "design_names", "stats");
  stats.dim = field<int>(j, "dim", "stats");
  stats.special_dim = field<int>(j, "special_dim", "stats");
  stats.sigma2 = vec_from(j.at("sigma2"), "sigma2");
  stats.delta = vec_from(j.at("delta"), "delta");
  stats.degenerate_z = field<bool>(j, "degenerate_z", "stats");
  stats.treated_components =
      field<std::vector<int>>(j, "treated_components", "stats");
  stats.control_components =
      field<std::vector<int>>(j, "control_components", "stats");
  stats.direction_ids =
      field<std::vector<std::string>>(j, "direction_ids", "stats");
  for (const Json& jd : j.at("directions")) {
    const Vector v = vec_from(jd, "direction");
    stats.directions.push_back(v.norm() < 0.5 ? Direction::zero(v.size())
                                              : Direction::stored(v));
  }
  stats.excluded = field<int>(j, "excluded", "stats");
  for (const Json& jr : j.at("rows")) {
    ReplicationRecord rec;
    if (jr.contains("excluded") && jr.at("excluded").get<bool>()) {
      rec.excluded = true;
      rec.note = field_or<std::string>(jr, "note", "row", "");
    } else {
      for (const Json& jd : jr.at("designs")) {
        MomentSummary ms;
        ms.treated = group_moments_from(jd.at("treated"), "treated moments");
        ms.control = group_moments_from(jd.at("control"), "control moments");
        rec.designs.push_back(std::move(ms));
      }
    }
    stats.rows.push_back(std::move(rec));
  }
  return stats;
}

void write_panel_csv(std::ostream& os, const Sample& sample) {
  const Eigen::Index p = sample.dim();
  os << "group,component";
  for (Eigen::Index c = 0; c < p; ++c) os << ",x" << (c + 1);
  os << "\n";
  auto write_rows = [&](const Matrix& rows, const std::vector<int>& labels,
                        const char* tag) {
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      os << tag << ','
         << (static_cast<std::size_t>(i) < labels.size() ? labels[i] : 0);
      for (Eigen::Index c = 0; c < p; ++c) {
        os << ',' << format_number(rows(i, c));
      }
      os << "\n";
    }
  };
  write_rows(sample.treated, sample.treated_component, "treated");
  write_rows(sample.control, sample.control_component, "control");
}

Sample read_panel_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("empty panel file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) header.push_back(tok);
  }
  if (header.size() < 3 || header[0] != "group" || header[1] != "component") {
    throw ConfigError("panel CSV must start with 'group,component,x1,...'");
  }
  const Eigen::Index p = static_cast<Eigen::Index>(header.size()) - 2;
  std::vector<Vector> treated, control;
  std::vector<int> tlab, clab;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> cells;
    while (std::getline(ss, tok, ',')) cells.push_back(tok);
    if (static_cast<Eigen::Index>(cells.size()) != p + 2) {
      throw ConfigError("panel CSV line " + std::to_string(line_no) +
                        " has the wrong number of cells");
    }
    Vector x(p);
    int label;
    try {
      label = std::stoi(cells[1]);
      for (Eigen::Index c = 0; c < p; ++c) {
        x[c] = std::stod(cells[static_cast<std::size_t>(c) + 2]);
      }
    } catch (const std::exception&) {
      throw ConfigError("panel CSV line " + std::to_string(line_no) +
                        " has a malformed number");
    }
    if (cells[0] == "treated") {
      treated.push_back(std::move(x));
      tlab.push_back(label);
    } else if (cells[0] == "control") {
      control.push_back(std::move(x));
      clab.push_back(label);
    } else {
      throw ConfigError("panel CSV line " + std::to_string(line_no) +
                        " has group '" + cells[0] + "'");
    }
  }
  if (treated.empty() || control.empty()) {
    throw ConfigError("panel CSV needs both treated and control rows");
  }
  Sample sample;
  sample.treated.resize(static_cast<Eigen::Index>(treated.size()), p);
  for (std::size_t i = 0; i < treated.size(); ++i) {
    sample.treated.row(static_cast<Eigen::Index>(i)) =
        treated[i].transpose();
  }
  sample.control.resize(static_cast<Eigen::Index>(control.size()), p);
  for (std::size_t i = 0; i < control.size(); ++i) {
    sample.control.row(static_cast<Eigen::Index>(i)) =
        control[i].transpose();
  }
  sample.treated_component = std::move(tlab);
  sample.control_component = std::move(clab);
  return sample;
}

Sample load_panel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  return read_panel_csv(in);
}

void write_match_csv(std::ostream& os, const MatchResult& result) {
  os << "pair_id,treated_row,control_row,distance\n";
  const std::size_t n =
      std::min(result.treated_rows.size(), result.control_rows.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double dist =
        i < result.pair_distances.size() ? result.pair_distances[i] : 0.0;
    os << i << ',' << result.treated_rows[i] << ',' << result.control_rows[i]
       << ',' << format_number(dist) << "\n";
  }
}

}  // namespace dmpes
