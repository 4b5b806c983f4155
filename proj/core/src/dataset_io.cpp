#include "itogen/dataset_io.hpp"

#include "itogen/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace itogen::io {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

void write_text_file(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot open " + file.string() + " for writing");
  out << text;
  if (!out) throw DataError("failed writing " + file.string());
}

std::string read_text_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

json spec_to_json(const sim::SdeSpec& spec) {
  json j;
  j["kind"] = sim::to_string(spec.kind);
  j["params"] = spec.params;
  j["x0"] = std::vector<double>(spec.x0.data(), spec.x0.data() + spec.x0.size());
  return j;
}

sim::SdeSpec spec_from_json(const json& j) {
  sim::SdeSpec spec;
  spec.kind = sim::sde_kind_from_string(j.at("kind").get<std::string>());
  spec.params = j.at("params").get<std::map<std::string, double>>();
  const auto x0 = j.at("x0").get<std::vector<double>>();
  spec.x0 = Eigen::Map<const Vec>(x0.data(), static_cast<Eigen::Index>(x0.size()));
  return spec;
}

std::vector<double> parse_row(const std::string& line, std::size_t expected,
                              const fs::path& file, std::size_t line_no) {
  std::vector<double> row;
  row.reserve(expected);
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t comma = line.find(',', pos);
    if (comma == std::string::npos) comma = line.size();
    double v = 0.0;
    const char* first = line.data() + pos;
    const char* last = line.data() + comma;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) {
      throw DataError(file.string() + ":" + std::to_string(line_no) +
                      ": cannot parse field '" + std::string(first, last) + "'");
    }
    row.push_back(v);
    pos = comma + 1;
    if (comma == line.size()) break;
  }
  if (row.size() != expected) {
    throw DataError(file.string() + ":" + std::to_string(line_no) +
                    ": expected " + std::to_string(expected) + " fields");
  }
  return row;
}

}  // namespace

void write_dataset(const fs::path& dir, const sim::PathDataset& ds,
                   const DatasetMeta& meta,
                   const std::vector<sim::ObservationSequence>* observations) {
  fs::create_directories(dir);
  const int d = ds.dim();

  json m;
  m["format"] = "itogen-dataset/1";
  m["sde"] = spec_to_json(meta.spec);
  m["T"] = meta.T;
  m["dt"] = meta.dt;
  m["n_steps"] = ds.grid().n_steps;
  m["seed"] = meta.seed;
  m["n_paths"] = ds.n_paths();
  m["d"] = d;
  if (meta.observation) {
    json o;
    o["p"] = meta.observation->p;
    o["coord_p"] = meta.observation->coord_p ? json(*meta.observation->coord_p)
                                             : json(nullptr);
    o["seed"] = meta.observation->seed;
    m["observation"] = o;
  }
  write_text_file(dir / "meta.json", m.dump(2) + "\n");

  std::string text = "path_id,time_index";
  for (int j = 0; j < d; ++j) text += ",coord_" + std::to_string(j);
  text += '\n';
  for (std::size_t p = 0; p < ds.n_paths(); ++p) {
    const std::string id = std::to_string(ds.path_ids()[p]);
    for (GridIndex k = 0; k <= ds.grid().n_steps; ++k) {
      text += id;
      text += ',';
      text += std::to_string(k);
      for (int j = 0; j < d; ++j) {
        text += ',';
        text += format_double(ds.at(p, k, j));
      }
      text += '\n';
    }
  }
  write_text_file(dir / "paths.csv", text);

  if (observations) {
    if (observations->size() != ds.n_paths()) {
      throw DataError("observation count does not match path count");
    }
    std::string otext = "path_id,time_index";
    for (int j = 0; j < d; ++j) otext += ",mask_" + std::to_string(j);
    otext += '\n';
    for (std::size_t p = 0; p < ds.n_paths(); ++p) {
      const std::string id = std::to_string(ds.path_ids()[p]);
      for (const auto& o : (*observations)[p].observations()) {
        otext += id;
        otext += ',';
        otext += std::to_string(o.index);
        for (int j = 0; j < d; ++j) otext += o.mask[j] != 0.0 ? ",1" : ",0";
        otext += '\n';
      }
    }
    write_text_file(dir / "obs.csv", otext);
  }
}

std::vector<sim::ObservationSequence> observations_from_masks(
    const sim::PathDataset& ds,
    const std::vector<std::vector<std::pair<GridIndex, Vec>>>& masks) {
  std::vector<sim::ObservationSequence> out;
  out.reserve(ds.n_paths());
  for (std::size_t p = 0; p < ds.n_paths(); ++p) {
    std::vector<sim::Observation> obs;
    for (const auto& [k, mask] : masks.at(p)) {
      if (k > ds.grid().n_steps) throw DataError("observation index off grid");
      obs.push_back({k, ds.point(p, k).cwiseProduct(mask), mask});
    }
    sim::ObservationSequence seq(ds.grid().dt, std::move(obs));
    seq.validate();
    out.push_back(std::move(seq));
  }
  return out;
}

LoadedDataset read_dataset(const fs::path& dir) {
  json m;
  try {
    m = json::parse(read_text_file(dir / "meta.json"));
  } catch (const json::exception& e) {
    throw DataError((dir / "meta.json").string() + ": " + e.what());
  }
  LoadedDataset out;
  std::size_t n_paths = 0;
  int d = 0;
  std::size_t n_steps = 0;
  try {
    out.meta.spec = spec_from_json(m.at("sde"));
    out.meta.T = m.at("T").get<double>();
    out.meta.dt = m.at("dt").get<double>();
    out.meta.seed = m.at("seed").get<std::uint64_t>();
    n_paths = m.at("n_paths").get<std::size_t>();
    d = m.at("d").get<int>();
    n_steps = m.at("n_steps").get<std::size_t>();
    if (m.contains("observation")) {
      const json& o = m["observation"];
      ObservationMeta om;
      om.p = o.at("p").get<double>();
      if (!o.at("coord_p").is_null()) om.coord_p = o["coord_p"].get<double>();
      om.seed = o.at("seed").get<std::uint64_t>();
      out.meta.observation = om;
    }
  } catch (const json::exception& e) {
    throw DataError((dir / "meta.json").string() + ": " + e.what());
  }

  const sim::Grid grid{out.meta.dt, n_steps};
  sim::PathDataset ds(grid, d, n_paths, out.meta.seed);
  std::map<std::size_t, std::size_t> row_of_id;

  {
    const fs::path file = dir / "paths.csv";
    std::istringstream in(read_text_file(file));
    std::string line;
    std::getline(in, line);  // header
    std::size_t line_no = 1;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto row = parse_row(line, 2 + static_cast<std::size_t>(d), file, line_no);
      const auto id = static_cast<std::size_t>(row[0]);
      const auto k = static_cast<GridIndex>(row[1]);
      if (k > n_steps) throw DataError(file.string() + ": time_index off grid");
      auto [it, inserted] = row_of_id.try_emplace(id, row_of_id.size());
      if (it->second >= n_paths) throw DataError(file.string() + ": too many paths");
      ds.mutable_path_ids()[it->second] = id;
      for (int j = 0; j < d; ++j) ds.at(it->second, k, j) = row[2 + static_cast<std::size_t>(j)];
      ++rows;
    }
    if (rows != n_paths * grid.n_points()) {
      throw DataError(file.string() + ": expected " +
                      std::to_string(n_paths * grid.n_points()) + " rows");
    }
  }

  if (fs::exists(dir / "obs.csv")) {
    const fs::path file = dir / "obs.csv";
    std::istringstream in(read_text_file(file));
    std::string line;
    std::getline(in, line);
    std::size_t line_no = 1;
    std::vector<std::vector<std::pair<GridIndex, Vec>>> masks(n_paths);
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto row = parse_row(line, 2 + static_cast<std::size_t>(d), file, line_no);
      auto it = row_of_id.find(static_cast<std::size_t>(row[0]));
      if (it == row_of_id.end()) throw DataError(file.string() + ": unknown path_id");
      Vec mask(d);
      for (int j = 0; j < d; ++j) mask[j] = row[2 + static_cast<std::size_t>(j)];
      masks[it->second].emplace_back(static_cast<GridIndex>(row[1]), mask);
    }
    out.observations = observations_from_masks(ds, masks);
  }
  out.paths = std::move(ds);
  return out;
}

}  // namespace itogen::io
