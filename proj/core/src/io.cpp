#include "smcvi/io.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace smcvi::io {

namespace {

using nlohmann::json;

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    std::vector<double> row;
    bool ok = true;
    for (const auto& c : cells) {
      double v;
      if (!parse_double(c, v)) {
        ok = false;
        break;
      }
      row.push_back(v);
    }
    if (!ok) {
      if (rows.empty() && lineno == 1) continue;  // header
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": non-numeric cell");
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(path.string() + ": no data rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header) {
  auto out = open_out(path);
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  if (!header.empty()) out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

hawkes::EventStream read_events_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  hawkes::EventStream ev;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    double t, mark;
    if (cells.size() != 2 || !parse_double(cells[0], t) || !parse_double(cells[1], mark)) {
      if (lineno == 1) continue;
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected timestamp_seconds,mark");
    }
    if (mark < 1.0 || mark != std::floor(mark)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": marks are 1-based integers");
    }
    if (!ev.empty() && !(t > ev.back().t)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": timestamps must strictly increase");
    }
    ev.push_back({t, static_cast<std::uint32_t>(mark) - 1});
  }
  return ev;
}

void write_events_csv(const std::filesystem::path& path, const hawkes::EventStream& events) {
  auto out = open_out(path);
  out << "timestamp_seconds,mark\n";
  for (const auto& e : events) out << e.t << ',' << (e.mark + 1) << '\n';
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TracePoint>& trace) {
  auto out = open_out(path);
  out << "iteration,elbo,log_Z,kl_term\n";
  for (const auto& p : trace) out << p.iteration << ',' << p.elbo << ',' << p.log_z << ',' << p.kl_term << '\n';
}

void write_density_grid(const std::filesystem::path& csv_path, const std::filesystem::path& json_path,
                        const diag::DensityGrid& grid) {
  {
    auto out = open_out(csv_path);
    out << "x,y,value\n";
    for (std::size_t ix = 0; ix < grid.x.points; ++ix) {
      for (std::size_t iy = 0; iy < grid.y.points; ++iy) {
        out << grid.x.at(ix) << ',' << grid.y.at(iy) << ',' << grid.at(ix, iy) << '\n';
      }
    }
  }
  auto axis = [](const diag::GridAxis& a) {
    return json{{"name", a.name}, {"index", a.index}, {"lo", a.lo}, {"hi", a.hi}, {"points", a.points}};
  };
  json h{{"x", axis(grid.x)}, {"y", axis(grid.y)}, {"fixed", grid.fixed}};
  auto out = open_out(json_path);
  out << h.dump(2) << '\n';
}

std::string checkpoint_to_json(const Checkpoint& c) {
  json factors = json::array();
  for (const auto& f : c.family.factors()) {
    factors.push_back({{"name", f.name}, {"kind", factor_kind_name(f.kind)}, {"mu", f.mu}, {"v", f.v}});
  }
  json j{{"model", c.model},
         {"mode", fit_mode_name(c.mode)},
         {"seed", c.seed},
         {"iteration", c.iteration},
         {"factors", factors},
         {"phi", c.phi},
         {"phi_names", c.phi_names},
         {"adam", {{"m", c.adam.m}, {"v", c.adam.v}, {"t", c.adam.t}}},
         {"recipe_state", c.recipe_state}};
  return j.dump(2);
}

Checkpoint checkpoint_from_json(const std::string& text) {
  Checkpoint c;
  try {
    const json j = json::parse(text);
    c.model = j.at("model").get<std::string>();
    c.mode = parse_fit_mode(j.at("mode").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.iteration = j.at("iteration").get<std::uint64_t>();
    std::vector<Factor> f;
    for (const auto& e : j.at("factors")) {
      f.push_back({e.at("name").get<std::string>(), parse_factor_kind(e.at("kind").get<std::string>()),
                   e.at("mu").get<double>(), e.at("v").get<double>()});
    }
    c.family = MeanFieldFamily(std::move(f));
    c.phi = j.at("phi").get<std::vector<double>>();
    c.phi_names = j.value("phi_names", std::vector<std::string>{});
    c.adam.m = j.at("adam").at("m").get<std::vector<double>>();
    c.adam.v = j.at("adam").at("v").get<std::vector<double>>();
    c.adam.t = j.at("adam").at("t").get<std::uint64_t>();
    c.recipe_state = j.value("recipe_state", std::vector<double>{});
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  auto out = open_out(path);
  out << checkpoint_to_json(c) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace smcvi::io
