#include "posekit/config.hpp"

#include <fstream>
#include <sstream>

#include "posekit/error.hpp"

namespace posekit {

CategoryConfig CategoryConfig::defaults() {
  CategoryConfig c;
  for (const char* name : {"bottle", "bowl", "can"}) c.categories[name] = SymmetrySpec::about(Vec3::UnitY());
  for (const char* name : {"camera", "laptop", "mug"}) c.categories[name] = SymmetrySpec::none();
  return c;
}

std::set<std::string> CategoryConfig::category_names() const {
  std::set<std::string> out;
  for (const auto& [name, sym] : categories) out.insert(name);
  return out;
}

const SymmetrySpec& CategoryConfig::symmetry(const std::string& category) const {
  const auto it = categories.find(category);
  require(it != categories.end(), ErrorCode::kInvalidInput, "category '" + category + "' is not configured");
  return it->second;
}

namespace {

std::string trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& value, const std::string& where) {
  std::istringstream ss(value);
  double v = 0.0;
  ss >> v;
  require(!ss.fail() && ss.eof(), ErrorCode::kParse, where + ": '" + value + "' is not a number");
  return v;
}

}  // namespace

CategoryConfig parse_category_config(std::istream& in, CategoryConfig base) {
  CategoryConfig c = std::move(base);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "config line " + std::to_string(line_no);
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::kParse, where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key.rfind("weights.", 0) == 0) {
      const std::string name = key.substr(8);
      static const std::map<std::string, double LossWeights::*> fields = {
          {"lambda1", &LossWeights::lambda_pose},  {"lambda2", &LossWeights::lambda_nocs},
          {"lambda3", &LossWeights::lambda_recon}, {"lambda4", &LossWeights::lambda_mask},
          {"lambda_reg", &LossWeights::lambda_reg}, {"beta", &LossWeights::beta}};
      const auto it = fields.find(name);
      require(it != fields.end(), ErrorCode::kParse, where + ": unknown weight '" + name + "'");
      c.weights.*(it->second) = parse_number(value, where);
      continue;
    }

    if (key.rfind("category.", 0) == 0) {
      const std::string rest = key.substr(9);
      const size_t dot = rest.rfind('.');
      require(dot != std::string::npos && dot > 0, ErrorCode::kParse, where + ": expected category.<name>.<field>");
      const std::string name = rest.substr(0, dot);
      const std::string field = rest.substr(dot + 1);
      SymmetrySpec& sym = c.categories[name];
      if (field == "symmetry") {
        require(value == "axis" || value == "none", ErrorCode::kParse, where + ": symmetry must be axis or none");
        sym.kind = value == "axis" ? SymmetrySpec::Kind::kAxis : SymmetrySpec::Kind::kNone;
      } else if (field == "axis") {
        std::istringstream ss(value);
        Vec3 a;
        ss >> a.x() >> a.y() >> a.z();
        require(!ss.fail() && (ss >> std::ws).eof(), ErrorCode::kParse, where + ": axis needs three numbers");
        sym.axis = a;
      } else if (field == "discretization") {
        const double d = parse_number(value, where);
        require(d == static_cast<int>(d), ErrorCode::kParse, where + ": discretization must be an integer");
        sym.discretization = static_cast<int>(d);
      } else {
        fail(ErrorCode::kParse, where + ": unknown category field '" + field + "'");
      }
      continue;
    }
    fail(ErrorCode::kParse, where + ": unknown key '" + key + "'");
  }

  try {
    validate(c.weights);
    for (const auto& [name, sym] : c.categories) validate(sym);
  } catch (const Error& e) {
    fail(ErrorCode::kParse, std::string("invalid config: ") + e.what());
  }
  return c;
}

CategoryConfig load_category_config(const std::filesystem::path& path, CategoryConfig base) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open config " + path.string());
  return parse_category_config(in, std::move(base));
}

}  // namespace posekit
