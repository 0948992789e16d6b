#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "angrymtl/encoders.hpp"
#include "angrymtl/model.hpp"
#include "angrymtl/params.hpp"

namespace angrymtl {

// On-disk container: one line of JSON (format tag, dtype, epoch, config
// snapshot, tensor names/shapes, payload checksum) followed by the raw
// little-endian float32 payloads in header order. The in-memory struct holds
// the float32 data, so save/load round-trips are byte-exact even though the
// live model trains in double precision.
struct CheckpointTensor {
  std::string name;
  long rows = 0;
  long cols = 0;
  std::vector<float> data;  // row-major, rows*cols entries
};

struct Checkpoint {
  long epoch = 0;
  nlohmann::ordered_json config;  // opaque snapshot of the run configuration
  std::vector<CheckpointTensor> tensors;

  static Checkpoint from_store(const ParamStore& store, long epoch,
                               nlohmann::ordered_json config);
  static Checkpoint from_model(const MultitaskModel& model, long epoch,
                               nlohmann::ordered_json config);

  // strict: the store and the checkpoint must list exactly the same tensors.
  // Non-strict applies only the checkpoint's tensors (each must still exist
  // with the exact shape). Throws ShapeMismatch.
  void apply_to(ParamStore& store, bool strict = true) const;

  const CheckpointTensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);  // CorruptFile on damage

// A reusable shared encoder on disk: <dir>/vocab.txt (one wordpiece per
// line) plus <dir>/encoder.ckpt holding only the shared.* tensors with the
// encoder dims as the config snapshot.
struct PretrainedEncoder {
  ContextualTokenizer tokenizer;
  TransformerDims dims;
  Checkpoint weights;
};

void save_pretrained_dir(const MultitaskModel& model, const std::string& dir);
PretrainedEncoder load_pretrained_dir(const std::string& dir);

}  // namespace angrymtl
