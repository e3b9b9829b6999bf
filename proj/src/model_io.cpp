#include "liftdig/model_io.hpp"

#include <cmath>
#include <stdexcept>

#include "liftdig/io_util.hpp"

namespace liftdig {

nlohmann::json matrix_to_json(const Mat& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Mat matrix_from_json(const nlohmann::json& j, int rows, int cols) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    throw std::runtime_error("model: expected " + std::to_string(rows) + " matrix rows");
  Mat M(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (!j[i].is_array() || static_cast<int>(j[i].size()) != cols)
      throw std::runtime_error("model: row " + std::to_string(i) + " expected " + std::to_string(cols) +
                               " entries");
    for (int k = 0; k < cols; ++k) M(i, k) = j[i][k].get<double>();
  }
  return M;
}

static nlohmann::json vec_to_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v[i]))
      a.push_back(v[i]);
    else
      a.push_back(fmt_double(v[i]));  // JSON has no infinity literal
  }
  return a;
}

static Vec vec_from_json(const nlohmann::json& j, int n) {
  if (!j.is_array() || static_cast<int>(j.size()) != n)
    throw std::runtime_error("model: expected vector of length " + std::to_string(n));
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = j[i].is_string() ? parse_double(j[i].get<std::string>()) : j[i].get<double>();
  return v;
}

nlohmann::json model_to_json(const DiscreteLiftedModel& m) {
  nlohmann::json j;
  j["version"] = kModelFormatVersion;
  j["dt"] = m.dt;
  j["lifting"] = to_string(m.lifting);
  j["ordering"] = observable_names(m.lifting);
  j["A"] = matrix_to_json(m.A);
  j["B"] = matrix_to_json(m.B);
  j["B_s"] = matrix_to_json(m.Bs);
  Vec lo = m.bounds.lower.size() ? m.bounds.lower : Vec::Constant(m.order(), -INFINITY);
  Vec hi = m.bounds.upper.size() ? m.bounds.upper : Vec::Constant(m.order(), INFINITY);
  j["bounds"] = {{"lower", vec_to_json(lo)}, {"upper", vec_to_json(hi)}};
  return j;
}

DiscreteLiftedModel model_from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != kModelFormatVersion) throw std::runtime_error("model: unsupported version");
  DiscreteLiftedModel m;
  m.lifting = lifting_from_string(j.value("lifting", std::string("dfl")));
  const int n = lifted_order(m.lifting);
  if (j.at("ordering").get<std::vector<std::string>>() != observable_names(m.lifting))
    throw std::runtime_error("model: ordering does not match lifting '" + to_string(m.lifting) + "'");
  m.dt = j.at("dt").get<double>();
  if (!(m.dt > 0)) throw std::runtime_error("model: dt must be positive");
  m.A = matrix_from_json(j.at("A"), n, n);
  m.B = matrix_from_json(j.at("B"), n, kInputDim);
  m.Bs = matrix_from_json(j.at("B_s"), n, kSoilDim);
  m.bounds.lower = vec_from_json(j.at("bounds").at("lower"), n);
  m.bounds.upper = vec_from_json(j.at("bounds").at("upper"), n);
  if ((m.bounds.lower.array() > m.bounds.upper.array()).any())
    throw std::runtime_error("model: bounds.lower exceeds bounds.upper");
  return m;
}

void save_model(const std::string& path, const DiscreteLiftedModel& m) {
  write_file(path, model_to_json(m).dump(1) + "\n");
}

DiscreteLiftedModel load_model(const std::string& path) {
  return model_from_json(nlohmann::json::parse(read_file(path)));
}

}  // namespace liftdig
