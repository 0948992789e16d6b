#include "angrymtl/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "angrymtl/errors.hpp"
#include "angrymtl/rng.hpp"

namespace angrymtl {

namespace {

using json = nlohmann::ordered_json;

std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

// float32 little-endian payload bytes in tensor order
std::string payload_bytes(const Checkpoint& ckpt) {
  std::string out;
  for (const CheckpointTensor& t : ckpt.tensors) {
    const size_t n = t.data.size() * sizeof(float);
    const size_t at = out.size();
    out.resize(at + n);
    std::memcpy(out.data() + at, t.data.data(), n);
  }
  return out;
}

}  // namespace

Checkpoint Checkpoint::from_store(const ParamStore& store, long epoch, json config) {
  Checkpoint ckpt;
  ckpt.epoch = epoch;
  ckpt.config = std::move(config);
  for (const auto& tp : store.tensors()) {
    const Tensor& t = *tp;
    CheckpointTensor ct;
    ct.name = t.name;
    ct.rows = t.value.rows();
    ct.cols = t.value.cols();
    ct.data.reserve(static_cast<size_t>(t.size()));
    for (long r = 0; r < t.value.rows(); ++r) {
      for (long c = 0; c < t.value.cols(); ++c) {
        ct.data.push_back(static_cast<float>(t.value(r, c)));
      }
    }
    ckpt.tensors.push_back(std::move(ct));
  }
  return ckpt;
}

Checkpoint Checkpoint::from_model(const MultitaskModel& model, long epoch, json config) {
  return from_store(model.params(), epoch, std::move(config));
}

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const CheckpointTensor& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void Checkpoint::apply_to(ParamStore& store, bool strict) const {
  if (strict) {
    for (const auto& tp : store.tensors()) {
      if (find(tp->name) == nullptr) {
        throw ShapeMismatch("checkpoint is missing tensor " + tp->name);
      }
    }
    if (tensors.size() != store.tensors().size()) {
      throw ShapeMismatch("checkpoint lists tensors the model does not have");
    }
  }
  for (const CheckpointTensor& ct : tensors) {
    if (!store.has(ct.name)) {
      if (strict) throw ShapeMismatch("model has no tensor named " + ct.name);
      throw ShapeMismatch("cannot apply unknown tensor " + ct.name);
    }
    Tensor& t = store.get(ct.name);
    if (t.value.rows() != ct.rows || t.value.cols() != ct.cols) {
      throw ShapeMismatch("tensor " + ct.name + ": checkpoint shape " + std::to_string(ct.rows) +
                          "x" + std::to_string(ct.cols) + " vs model " +
                          std::to_string(t.value.rows()) + "x" + std::to_string(t.value.cols()));
    }
    size_t at = 0;
    for (long r = 0; r < t.value.rows(); ++r) {
      for (long c = 0; c < t.value.cols(); ++c) {
        t.value(r, c) = static_cast<double>(ct.data[at++]);
      }
    }
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string payload = payload_bytes(ckpt);
  json header;
  header["format"] = "amtl.ckpt";
  header["version"] = 1;
  header["dtype"] = "f32";
  header["epoch"] = ckpt.epoch;
  header["config"] = ckpt.config;
  json tensor_list = json::array();
  for (const CheckpointTensor& t : ckpt.tensors) {
    tensor_list.push_back(json{{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  }
  header["tensors"] = std::move(tensor_list);
  header["payload_checksum"] =
      hex64(fnv1a_bytes(payload.data(), payload.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << header.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError("failed writing checkpoint payload: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string header_line;
  if (!std::getline(in, header_line)) throw CorruptFile("checkpoint has no header: " + path);

  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::parse_error& e) {
    throw CorruptFile("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  if (!header.is_object() || header.value("format", "") != "amtl.ckpt") {
    throw CorruptFile("not a checkpoint file: " + path);
  }
  if (header.value("version", 0) != 1) throw CorruptFile("unsupported checkpoint version");
  if (header.value("dtype", "") != "f32") throw CorruptFile("unsupported checkpoint dtype");

  Checkpoint ckpt;
  ckpt.epoch = header.value("epoch", 0L);
  ckpt.config = header.value("config", json::object());

  size_t expect_bytes = 0;
  if (!header.contains("tensors") || !header["tensors"].is_array()) {
    throw CorruptFile("checkpoint header lists no tensors");
  }
  for (const json& tj : header["tensors"]) {
    CheckpointTensor ct;
    try {
      ct.name = tj.at("name").get<std::string>();
      ct.rows = tj.at("rows").get<long>();
      ct.cols = tj.at("cols").get<long>();
    } catch (const json::exception& e) {
      throw CorruptFile("malformed tensor entry: " + std::string(e.what()));
    }
    if (ct.rows < 0 || ct.cols < 0) throw CorruptFile("negative tensor shape");
    ct.data.resize(static_cast<size_t>(ct.rows) * static_cast<size_t>(ct.cols));
    expect_bytes += ct.data.size() * sizeof(float);
    ckpt.tensors.push_back(std::move(ct));
  }

  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (payload.size() != expect_bytes) {
    throw CorruptFile("checkpoint payload is " + std::to_string(payload.size()) +
                      " bytes, header expects " + std::to_string(expect_bytes));
  }
  const std::string want = header.value("payload_checksum", "");
  const std::string got = hex64(fnv1a_bytes(payload.data(), payload.size()));
  if (want != got) {
    throw CorruptFile("checkpoint checksum mismatch: header " + want + ", payload " + got);
  }

  size_t at = 0;
  for (CheckpointTensor& ct : ckpt.tensors) {
    std::memcpy(ct.data.data(), payload.data() + at, ct.data.size() * sizeof(float));
    at += ct.data.size() * sizeof(float);
  }
  return ckpt;
}

void save_pretrained_dir(const MultitaskModel& model, const std::string& dir) {
  if (!model.tokenizer().is_wordpiece()) {
    throw ConfigError("a reusable encoder needs an explicit wordpiece vocabulary");
  }
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir + "/vocab.txt");
    if (!out) throw DataError("cannot write vocab: " + dir + "/vocab.txt");
    for (const std::string& p : model.tokenizer().pieces) out << p << '\n';
  }
  const TransformerDims& d = model.config().dims;
  json dims_json{{"d", d.d},         {"layers", d.layers},   {"heads", d.heads},
                 {"vocab", d.vocab}, {"max_len", d.max_len}, {"ffn_mult", d.ffn_mult}};
  Checkpoint full = Checkpoint::from_model(model, 0, dims_json);
  Checkpoint shared_only;
  shared_only.epoch = 0;
  shared_only.config = std::move(dims_json);
  for (CheckpointTensor& t : full.tensors) {
    if (t.name.rfind("shared.", 0) == 0) shared_only.tensors.push_back(std::move(t));
  }
  save_checkpoint(shared_only, dir + "/encoder.ckpt");
}

PretrainedEncoder load_pretrained_dir(const std::string& dir) {
  PretrainedEncoder pe;
  pe.tokenizer = ContextualTokenizer::wordpiece_file(dir + "/vocab.txt");
  pe.weights = load_checkpoint(dir + "/encoder.ckpt");
  const nlohmann::ordered_json& c = pe.weights.config;
  try {
    pe.dims.d = c.at("d").get<int>();
    pe.dims.layers = c.at("layers").get<int>();
    pe.dims.heads = c.at("heads").get<int>();
    pe.dims.vocab = c.at("vocab").get<int>();
    pe.dims.max_len = c.at("max_len").get<int>();
    pe.dims.ffn_mult = c.at("ffn_mult").get<int>();
  } catch (const json::exception& e) {
    throw CorruptFile("encoder checkpoint config is incomplete: " + std::string(e.what()));
  }
  if (pe.dims.vocab != pe.tokenizer.vocab_size) {
    throw ShapeMismatch("vocab.txt has " + std::to_string(pe.tokenizer.vocab_size) +
                        " pieces, encoder expects " + std::to_string(pe.dims.vocab));
  }
  return pe;
}

}  // namespace angrymtl
