#include "csab/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace csab {

namespace {

using nlohmann::json;

json spec_to_json(const ModelSpec& s) {
  json blocks = json::array();
  for (const auto& b : s.blocks)
    blocks.push_back(json::array({b.convs, b.channels}));
  return json{{"input_h", s.input_h},
              {"input_w", s.input_w},
              {"input_c", s.input_c},
              {"blocks", blocks},
              {"head", head_kind_name(s.head)},
              {"num_classes", s.num_classes},
              {"gmp_literal_scale", s.gmp_literal_scale},
              {"dropout", s.dropout}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.input_h = j.at("input_h").get<std::size_t>();
  s.input_w = j.at("input_w").get<std::size_t>();
  s.input_c = j.at("input_c").get<std::size_t>();
  s.blocks.clear();
  for (const auto& b : j.at("blocks"))
    s.blocks.push_back({b.at(0).get<std::size_t>(),
                        b.at(1).get<std::size_t>()});
  s.head = parse_head_kind(j.at("head").get<std::string>());
  s.num_classes = j.at("num_classes").get<std::size_t>();
  s.gmp_literal_scale = j.at("gmp_literal_scale").get<bool>();
  s.dropout = j.at("dropout").get<double>();
  return s;
}

json label_map_to_json(const LabelMap& m) {
  json entries = json::array();
  for (const auto& [name, mapped] : m.entries)
    entries.push_back(json::array({name, mapped}));
  return json{{"entries", entries}, {"class_names", m.class_names}};
}

LabelMap label_map_from_json(const json& j) {
  LabelMap m;
  for (const auto& e : j.at("entries"))
    m.entries.emplace_back(e.at(0).get<std::string>(), e.at(1).get<int>());
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  return m;
}

json augment_to_json(const AugmentConfig& a) {
  return json{{"rotation_deg", a.rotation_deg},
              {"width_shift_frac", a.width_shift_frac},
              {"scale_lo", a.scale_lo},
              {"scale_hi", a.scale_hi},
              {"hflip_prob", a.hflip_prob},
              {"contrast_lo", a.contrast_lo},
              {"contrast_hi", a.contrast_hi},
              {"brightness_lo", a.brightness_lo},
              {"brightness_hi", a.brightness_hi},
              {"seed", a.seed}};
}

AugmentConfig augment_from_json(const json& j) {
  AugmentConfig a;
  a.rotation_deg = j.at("rotation_deg").get<double>();
  a.width_shift_frac = j.at("width_shift_frac").get<double>();
  a.scale_lo = j.at("scale_lo").get<double>();
  a.scale_hi = j.at("scale_hi").get<double>();
  a.hflip_prob = j.at("hflip_prob").get<double>();
  a.contrast_lo = j.at("contrast_lo").get<double>();
  a.contrast_hi = j.at("contrast_hi").get<double>();
  a.brightness_lo = j.at("brightness_lo").get<double>();
  a.brightness_hi = j.at("brightness_hi").get<double>();
  a.seed = j.at("seed").get<std::uint64_t>();
  return a;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"momentum", c.momentum},
              {"seed", c.seed},
              {"val_fraction", c.val_fraction},
              {"augment", augment_to_json(c.augment)}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.val_fraction = j.at("val_fraction").get<double>();
  c.augment = augment_from_json(j.at("augment"));
  return c;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void read_exact(std::istream& in, void* dst, std::size_t n,
                const char* what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw CheckpointError(CheckpointError::Kind::truncated,
                          std::string("checkpoint truncated while reading ") +
                              what);
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  read_exact(in, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in, const char* what) {
  unsigned char b[8];
  read_exact(in, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  validate_params(cp.spec, cp.params);
  json history = json::array();
  for (const auto& h : cp.history)
    history.push_back(json::array({h.train_loss, h.train_acc, h.val_acc}));
  const json header{{"spec", spec_to_json(cp.spec)},
                    {"label_map", label_map_to_json(cp.label_map)},
                    {"train_config", train_config_to_json(cp.train_config)},
                    {"history", history},
                    {"test_env", cp.test_env}};
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write("CSAB", 4);
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<std::uint32_t>(header_str.size()));
  out.write(header_str.data(),
            static_cast<std::streamsize>(header_str.size()));

  for (const auto& [name, shape] : skeleton(cp.spec)) {
    const Parameter<float>* p = cp.params.find(name);
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) write_u64(out, d);
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.numel() * sizeof(float)));
  }
  if (!out) throw DataError("short write on checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");

  char magic[4];
  read_exact(in, magic, 4, "magic");
  if (std::memcmp(magic, "CSAB", 4) != 0)
    throw CheckpointError(CheckpointError::Kind::bad_magic,
                          "'" + path + "' is not a checkpoint (bad magic)");
  const std::uint32_t version = read_u32(in, "version");
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointError::Kind::version_mismatch,
                          "checkpoint version " + std::to_string(version) +
                              " unsupported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  const std::uint32_t header_len = read_u32(in, "header length");
  std::string header_str(header_len, '\0');
  read_exact(in, header_str.data(), header_len, "header");

  Checkpoint cp;
  try {
    const json header = json::parse(header_str);
    cp.spec = spec_from_json(header.at("spec"));
    cp.label_map = label_map_from_json(header.at("label_map"));
    cp.train_config = train_config_from_json(header.at("train_config"));
    for (const auto& h : header.at("history"))
      cp.history.push_back({h.at(0).get<double>(), h.at(1).get<double>(),
                            h.at(2).get<double>()});
    cp.test_env = header.at("test_env").get<int>();
  } catch (const json::exception& e) {
    throw DataError("checkpoint '" + path + "' header corrupt: " + e.what());
  }

  for (const auto& [name, shape] : skeleton(cp.spec)) {
    const std::uint32_t name_len = read_u32(in, "tensor name length");
    std::string got(name_len, '\0');
    read_exact(in, got.data(), name_len, "tensor name");
    if (got != name)
      throw CheckpointError(CheckpointError::Kind::tensor_mismatch,
                            "checkpoint tensor '" + got + "' where '" + name +
                                "' was expected");
    const std::uint32_t rank = read_u32(in, "tensor rank");
    Shape dims(rank);
    for (std::uint32_t d = 0; d < rank; ++d)
      dims[d] = static_cast<std::size_t>(read_u64(in, "tensor dims"));
    if (dims != shape)
      throw CheckpointError(CheckpointError::Kind::tensor_mismatch,
                            "checkpoint tensor '" + name + "' has shape " +
                                shape_str(dims) + ", expected " +
                                shape_str(shape));
    Tensor<float> value(dims);
    read_exact(in, value.data(), value.numel() * sizeof(float),
               "tensor data");
    cp.params.params.emplace_back(name, std::move(value));
  }

  if (in.peek() != EOF)
    throw CheckpointError(CheckpointError::Kind::tensor_mismatch,
                          "checkpoint '" + path +
                              "' has unexpected trailing data");
  validate_params(cp.spec, cp.params);
  return cp;
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,train_loss,train_acc,val_acc\n";
  char line[128];
  for (std::size_t e = 0; e < history.size(); ++e) {
    std::snprintf(line, sizeof(line), "%zu,%.6f,%.6f,%.6f\n", e + 1,
                  history[e].train_loss, history[e].train_acc,
                  history[e].val_acc);
    out += line;
  }
  return out;
}

}  // namespace csab
