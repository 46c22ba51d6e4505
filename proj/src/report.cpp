#include <charconv>
#include <cstdio>
#include <sstream>
#include <string>

#include "dmpes/model_io.hpp"

namespace dmpes {

std::string format_number(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value,
                           std::chars_format::general, 6);
  return std::string(buf, res.ptr);
}

Json to_json(const VerificationReport& report) {
  Json j;
  j["config"] = report.config_name;
  j["seed"] = report.seed;
  j["suite"] = report.suite;
  j["replications"] = report.replications;
  j["excluded"] = report.excluded;
  j["all_pass"] = report.all_pass();
  Json claims = Json::array();
  for (const Claim& c : report.claims) {
    Json jc;
    jc["id"] = c.id;
    jc["verdict"] = verdict_name(c.verdict);
    jc["estimate"] = c.estimate;
    jc["reference"] = c.reference;
    jc["se"] = c.se;
    jc["notes"] = c.notes;
    claims.push_back(std::move(jc));
  }
  j["claims"] = std::move(claims);
  Json rows = Json::array();
  for (const DirectionRow& r : report.direction_rows) {
    Json jr;
    jr["direction"] = r.direction_id;
    jr["component"] = r.component;
    jr["rho"] = r.rho;
    jr["pbr"] = r.pbr;
    jr["pbr_se"] = r.pbr_se;
    jr["pbr_discriminant"] = r.pbr_discriminant;
    jr["pbr_discriminant_se"] = r.pbr_discriminant_se;
    jr["ratio_observed"] = r.ratio_observed;
    jr["ratio_predicted"] = r.ratio_predicted;
    jr["ratio_se"] = r.ratio_se;
    jr["dispersion_observed"] = r.dispersion_observed;
    jr["dispersion_predicted"] = r.dispersion_predicted;
    jr["dispersion_se"] = r.dispersion_se;
    rows.push_back(std::move(jr));
  }
  j["directions"] = std::move(rows);
  Json fits = Json::array();
  for (const FitRow& f : report.fits) {
    Json jf;
    jf["target"] = f.target;
    jf["scale"] = f.scale;
    jf["coefficient"] = f.coefficient;
    jf["residual"] = f.residual;
    fits.push_back(std::move(jf));
  }
  j["fits"] = std::move(fits);
  return j;
}

std::string render_text(const VerificationReport& report) {
  std::ostringstream os;
  os << "config: " << report.config_name << "\n";
  os << "seed: " << report.seed << "\n";
  os << "suite: " << report.suite << "\n";
  os << "replications: " << report.replications << " (excluded "
     << report.excluded << ")\n";
  os << "result: " << (report.all_pass() ? "pass" : "fail") << "\n\n";

  char line[256];
  std::snprintf(line, sizeof(line), "%-42s %-10s %14s %14s %14s\n", "claim",
                "verdict", "estimate", "allowance", "se");
  os << line;
  for (const Claim& c : report.claims) {
    std::snprintf(line, sizeof(line), "%-42s %-10s %14s %14s %14s\n",
                  c.id.c_str(), verdict_name(c.verdict),
                  format_number(c.estimate).c_str(),
                  format_number(c.reference).c_str(),
                  format_number(c.se).c_str());
    os << line;
    if (!c.notes.empty()) os << "    " << c.notes << "\n";
  }

  if (!report.direction_rows.empty()) {
    os << "\n";
    std::snprintf(line, sizeof(line),
                  "%-12s %5s %9s %12s %12s %12s %12s %12s %12s\n",
                  "direction", "comp", "rho", "pbr", "pbr_disc", "ratio_obs",
                  "ratio_pred", "disp_obs", "disp_pred");
    os << line;
    for (const DirectionRow& r : report.direction_rows) {
      std::snprintf(line, sizeof(line),
                    "%-12s %5d %9s %12s %12s %12s %12s %12s %12s\n",
                    r.direction_id.c_str(), r.component,
                    format_number(r.rho).c_str(),
                    format_number(r.pbr).c_str(),
                    format_number(r.pbr_discriminant).c_str(),
                    format_number(r.ratio_observed).c_str(),
                    format_number(r.ratio_predicted).c_str(),
                    format_number(r.dispersion_observed).c_str(),
                    format_number(r.dispersion_predicted).c_str());
      os << line;
    }
  }

  if (!report.fits.empty()) {
    os << "\n";
    std::snprintf(line, sizeof(line), "%-46s %12s %12s %12s\n", "fitted target",
                  "scale", "coefficient", "residual");
    os << line;
    for (const FitRow& f : report.fits) {
      std::snprintf(line, sizeof(line), "%-46s %12s %12s %12s\n",
                    f.target.c_str(), format_number(f.scale).c_str(),
                    format_number(f.coefficient).c_str(),
                    format_number(f.residual).c_str());
      os << line;
    }
  }
  return os.str();
}

std::string render_directions_csv(const VerificationReport& report) {
  std::ostringstream os;
  os << "direction,component,rho,pbr,pbr_se,pbr_discriminant,"
        "pbr_discriminant_se,ratio_observed,ratio_predicted,ratio_se,"
        "dispersion_observed,dispersion_predicted,dispersion_se\n";
  for (const DirectionRow& r : report.direction_rows) {
    os << r.direction_id << ',' << r.component << ',' << format_number(r.rho)
       << ',' << format_number(r.pbr) << ',' << format_number(r.pbr_se) << ','
       << format_number(r.pbr_discriminant) << ','
       << format_number(r.pbr_discriminant_se) << ','
       << format_number(r.ratio_observed) << ','
       << format_number(r.ratio_predicted) << ','
       << format_number(r.ratio_se) << ','
       << format_number(r.dispersion_observed) << ','
       << format_number(r.dispersion_predicted) << ','
       << format_number(r.dispersion_se) << '\n';
  }
  return os.str();
}

}  // namespace dmpes
