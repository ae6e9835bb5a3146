#include "csab/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "csab/error.hpp"
#include "csab/image.hpp"
#include "csab/log.hpp"
#include "csab/rng.hpp"

namespace fs = std::filesystem;

namespace csab {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  const std::size_t h = line.find('#');
  return h == std::string::npos ? line : line.substr(0, h);
}

int parse_int(const std::string& tok, const std::string& context) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(tok, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos != tok.size())
    throw DataError(context + ": expected an integer, got '" + tok + "'");
  return v;
}

}  // namespace

int LabelMap::raw_index(const std::string& name) const {
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].first == name) return static_cast<int>(i);
  return -1;
}

int LabelMap::map_raw(int raw_class) const {
  if (raw_class < 0 || raw_class >= static_cast<int>(entries.size()))
    throw DataError("label map: unknown raw class id " +
                    std::to_string(raw_class));
  return entries[static_cast<std::size_t>(raw_class)].second;
}

void LabelMap::validate() const {
  if (entries.empty()) throw DataError("label map: no raw classes");
  if (class_names.empty()) throw DataError("label map: no class names");
  const int k = static_cast<int>(class_names.size());
  std::vector<bool> hit(class_names.size(), false);
  for (const auto& [name, mapped] : entries) {
    if (mapped == kExcluded) continue;
    if (mapped < 0 || mapped >= k)
      throw DataError("label map: class '" + name + "' maps to " +
                      std::to_string(mapped) + ", outside [0," +
                      std::to_string(k) + ")");
    hit[static_cast<std::size_t>(mapped)] = true;
  }
  for (int c = 0; c < k; ++c)
    if (!hit[static_cast<std::size_t>(c)])
      throw DataError("label map: mapped class " + std::to_string(c) +
                      " ('" + class_names[static_cast<std::size_t>(c)] +
                      "') has no raw class");
}

LabelMap LabelMap::default_map() {
  LabelMap m;
  m.entries = {
      {"Step_1", 0},       {"Step_2_Left", 1},  {"Step_2_Right", 1},
      {"Step_3", 2},       {"Step_4_Left", 3},  {"Step_4_Right", 3},
      {"Step_5_Left", 4},  {"Step_5_Right", 4}, {"Step_6_Left", 5},
      {"Step_6_Right", 5}, {"Step_7_Left", kExcluded},
      {"Step_7_Right", kExcluded},
  };
  m.class_names = {"step_1", "step_2", "step_3", "step_4", "step_5",
                   "step_6"};
  return m;
}

LabelMap LabelMap::parse(const std::string& text) {
  LabelMap m;
  std::vector<std::pair<int, std::string>> names;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b;
    ls >> a >> b;
    std::string extra;
    const std::string ctx = "label map line " + std::to_string(lineno);
    if (a == "@class") {
      ls >> extra;
      if (b.empty() || extra.empty())
        throw DataError(ctx + ": expected '@class <index> <name>'");
      names.emplace_back(parse_int(b, ctx), extra);
      continue;
    }
    if (ls >> extra) throw DataError(ctx + ": trailing text '" + extra + "'");
    if (a.empty() || b.empty())
      throw DataError(ctx + ": expected '<RawName> <index|excluded>'");
    if (m.raw_index(a) >= 0)
      throw DataError(ctx + ": duplicate raw class '" + a + "'");
    const int mapped = b == "excluded" ? kExcluded : parse_int(b, ctx);
    m.entries.emplace_back(a, mapped);
  }
  int k = -1;
  for (const auto& [name, mapped] : m.entries) k = std::max(k, mapped);
  for (const auto& [idx, name] : names) k = std::max(k, idx);
  if (k < 0) throw DataError("label map: every raw class is excluded");
  m.class_names.resize(static_cast<std::size_t>(k) + 1);
  for (std::size_t c = 0; c < m.class_names.size(); ++c)
    m.class_names[c] = "class_" + std::to_string(c);
  for (const auto& [idx, name] : names) {
    if (idx < 0 || idx > k)
      throw DataError("label map: @class index " + std::to_string(idx) +
                      " out of range");
    m.class_names[static_cast<std::size_t>(idx)] = name;
  }
  m.validate();
  return m;
}

std::string LabelMap::serialize() const {
  std::ostringstream out;
  for (const auto& [name, mapped] : entries) {
    out << name << " ";
    if (mapped == kExcluded)
      out << "excluded";
    else
      out << mapped;
    out << "\n";
  }
  for (std::size_t c = 0; c < class_names.size(); ++c)
    out << "@class " << c << " " << class_names[c] << "\n";
  return out.str();
}

LabelMap LabelMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label map '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string derive_source_video(const std::string& path) {
  std::string stem = fs::path(path).stem().string();
  const std::size_t us = stem.find_last_of('_');
  if (us != std::string::npos && us + 1 < stem.size()) {
    const std::string tail = stem.substr(us + 1);
    if (std::all_of(tail.begin(), tail.end(),
                    [](unsigned char c) { return std::isdigit(c); }))
      return stem.substr(0, us);
  }
  return stem;
}

std::uint64_t DatasetManifest::compute_checksum() const {
  std::ostringstream body;
  for (const auto& r : records)
    body << r.path << "\t" << r.raw_class << "\t" << r.mapped_class << "\t"
         << r.environment << "\n";
  return fnv1a64(body.str());
}

std::set<std::string> load_exclude_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open exclude list '" + path + "'");
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(strip_comment(line));
    if (!line.empty()) out.insert(line);
  }
  return out;
}

ScanOutcome scan_dataset(const std::string& root, const LabelMap& label_map,
                         const std::set<std::string>& exclude) {
  label_map.validate();
  if (!fs::is_directory(root))
    throw DataError("dataset root '" + root + "' is not a directory");
  ScanOutcome out;
  out.manifest.label_map = label_map;

  std::vector<fs::path> env_dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (!e.is_directory()) continue;
    env_dirs.push_back(e.path());
  }
  std::sort(env_dirs.begin(), env_dirs.end());

  for (const auto& env_dir : env_dirs) {
    const std::string env_name = env_dir.filename().string();
    if (env_name.rfind("env", 0) != 0 || env_name.size() <= 3)
      throw DataError("unexpected environment directory '" +
                      env_dir.string() + "' (expected env<k>)");
    const int env = parse_int(env_name.substr(3),
                              "environment directory '" + env_name + "'");

    std::vector<fs::path> class_dirs;
    for (const auto& c : fs::directory_iterator(env_dir)) {
      if (!c.is_directory()) continue;
      class_dirs.push_back(c.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());

    for (const auto& class_dir : class_dirs) {
      const std::string raw_name = class_dir.filename().string();
      const int raw = label_map.raw_index(raw_name);
      if (raw < 0)
        throw DataError("unknown class directory '" + class_dir.string() +
                        "' (no label map entry for '" + raw_name + "')");

      std::vector<fs::path> files;
      for (const auto& f : fs::directory_iterator(class_dir)) {
        if (!f.is_regular_file()) continue;
        files.push_back(f.path());
      }
      std::sort(files.begin(), files.end());

      for (const auto& file : files) {
        std::string ext = file.extension().string();
        for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
        if (ext != ".ppm" && ext != ".png" && ext != ".jpg" &&
            ext != ".jpeg")
          continue;
        const std::string rel =
            fs::relative(file, root).generic_string();
        if (exclude.count(rel)) {
          out.skipped.emplace_back(file.string(), "on the exclude list");
          continue;
        }
        try {
          load_image(file.string(), 8, 8);  // decode check only
        } catch (const std::exception& ex) {
          out.skipped.emplace_back(file.string(), ex.what());
          continue;
        }
        SampleRecord rec;
        rec.path = file.string();
        rec.raw_class = raw;
        rec.mapped_class = label_map.map_raw(raw);
        rec.environment = env;
        rec.source_video = derive_source_video(rec.path);
        out.manifest.records.push_back(std::move(rec));
      }
    }
  }

  std::sort(out.manifest.records.begin(), out.manifest.records.end(),
            [](const SampleRecord& a, const SampleRecord& b) {
              return a.path < b.path;
            });
  out.manifest.checksum = out.manifest.compute_checksum();
  return out;
}

std::string serialize_manifest(const DatasetManifest& m) {
  std::ostringstream out;
  out << "#csab-manifest v1\n";
  for (const auto& [name, mapped] : m.label_map.entries) {
    out << "#labelmap " << name << " ";
    if (mapped == kExcluded)
      out << "excluded";
    else
      out << mapped;
    out << "\n";
  }
  for (std::size_t c = 0; c < m.label_map.class_names.size(); ++c)
    out << "#class " << c << " " << m.label_map.class_names[c] << "\n";
  for (const auto& r : m.records)
    out << r.path << "\t" << r.raw_class << "\t" << r.mapped_class << "\t"
        << r.environment << "\n";
  return out.str();
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest '" + path + "'");
  out << serialize_manifest(m);
  if (!out) throw DataError("short write on manifest '" + path + "'");
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || trim(line) != "#csab-manifest v1")
    throw DataError("manifest '" + path +
                    "': missing '#csab-manifest v1' header");
  DatasetManifest m;
  std::string map_text;
  std::vector<std::string> record_lines;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind("#labelmap ", 0) == 0) {
      map_text += line.substr(10);
      map_text += "\n";
      continue;
    }
    if (line.rfind("#class ", 0) == 0) {
      map_text += "@class " + line.substr(7) + "\n";
      continue;
    }
    if (trim(line).empty() || line[0] == '#') continue;
    record_lines.push_back(line);
  }
  m.label_map = map_text.empty() ? LabelMap::default_map()
                                 : LabelMap::parse(map_text);

  lineno = 1;
  for (const auto& rl : record_lines) {
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = rl.find('\t', start);
      cols.push_back(trim(rl.substr(
          start, tab == std::string::npos ? std::string::npos : tab - start)));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const std::string ctx = "manifest '" + path + "' record " +
                            std::to_string(lineno++);
    if (cols.size() != 4)
      throw DataError(ctx + ": expected 4 tab-separated columns, got " +
                      std::to_string(cols.size()));
    SampleRecord rec;
    rec.path = cols[0];
    rec.raw_class = parse_int(cols[1], ctx);
    rec.mapped_class = parse_int(cols[2], ctx);
    rec.environment = parse_int(cols[3], ctx);
    const int expect = m.label_map.map_raw(rec.raw_class);
    if (rec.mapped_class != expect)
      throw DataError(ctx + ": mapped class " +
                      std::to_string(rec.mapped_class) +
                      " disagrees with the label map (expected " +
                      std::to_string(expect) + ")");
    rec.source_video = derive_source_video(rec.path);
    m.records.push_back(std::move(rec));
  }
  m.checksum = m.compute_checksum();
  return m;
}

SplitResult environment_split(const DatasetManifest& m, int test_env) {
  std::set<int> envs;
  for (const auto& r : m.records) envs.insert(r.environment);
  if (!envs.count(test_env)) {
    std::string avail;
    for (int e : envs) avail += (avail.empty() ? "" : ", ") +
                                std::to_string(e);
    throw DataError("test environment " + std::to_string(test_env) +
                    " not in manifest (available: " +
                    (avail.empty() ? "none" : avail) + ")");
  }
  SplitResult out;
  out.spec.test_environment = test_env;
  for (int e : envs)
    if (e != test_env) out.spec.train_environments.insert(e);
  for (const auto& r : m.records) {
    if (r.mapped_class == kExcluded) continue;
    if (r.environment == test_env)
      out.test.push_back(r);
    else
      out.train.push_back(r);
  }
  if (out.train.empty())
    log_warn("environment split: train set is empty (test env " +
             std::to_string(test_env) + " is the only environment)");
  return out;
}

}  // namespace csab
