// SPDX-License-Identifier: Apache-2.0
#include "mfp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mfp {

using json = nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

json model_config_json(const ModelConfig& c) {
  return {{"modes", c.modes},         {"enc_hidden", c.enc_hidden}, {"dec_hidden", c.dec_hidden},
          {"slots", c.slots},         {"key_dim", c.key_dim},       {"value_dim", c.value_dim},
          {"key_hidden", c.key_hidden}, {"dyn_hidden", c.dyn_hidden}, {"dyn_out", c.dyn_out},
          {"context_dim", c.context_dim}, {"temperature", c.temperature}, {"pos_scale", c.pos_scale}};
}

ModelConfig model_config_from(const json& j) {
  ModelConfig c;
  c.modes = j.at("modes");
  c.enc_hidden = j.at("enc_hidden");
  c.dec_hidden = j.at("dec_hidden");
  c.slots = j.at("slots");
  c.key_dim = j.at("key_dim");
  c.value_dim = j.at("value_dim");
  c.key_hidden = j.at("key_hidden");
  c.dyn_hidden = j.at("dyn_hidden");
  c.dyn_out = j.at("dyn_out");
  c.context_dim = j.at("context_dim");
  c.temperature = j.at("temperature");
  c.pos_scale = j.at("pos_scale");
  c.validate();
  return c;
}

json train_config_json(const TrainConfig& c) {
  return {{"phase1_updates", c.phase1_updates},
          {"phase2_updates", c.phase2_updates},
          {"phase1_forcing", forcing_name(c.phase1_forcing)},
          {"anneal_updates", c.anneal_updates},
          {"anneal_start", c.anneal_start},
          {"lr0", c.lr0},
          {"lr_decay_every", c.lr_decay_every},
          {"lr_floor", c.lr_floor},
          {"clip_norm", c.clip_norm},
          {"validate_every", c.validate_every},
          {"eval_forcing", forcing_name(c.eval_forcing)},
          {"f32_storage", c.f32_storage},
          {"seed", c.seed}};
}

TrainConfig train_config_from(const json& j) {
  TrainConfig c;
  c.phase1_updates = j.at("phase1_updates");
  c.phase2_updates = j.at("phase2_updates");
  c.phase1_forcing = parse_forcing(j.at("phase1_forcing"));
  c.anneal_updates = j.at("anneal_updates");
  c.anneal_start = j.at("anneal_start");
  c.lr0 = j.at("lr0");
  c.lr_decay_every = j.at("lr_decay_every");
  c.lr_floor = j.at("lr_floor");
  c.clip_norm = j.at("clip_norm");
  c.validate_every = j.at("validate_every");
  c.eval_forcing = parse_forcing(j.at("eval_forcing"));
  c.f32_storage = j.at("f32_storage");
  c.seed = j.at("seed");
  return c;
}

struct Blob {
  std::string name;
  const Mat* value;
  Mat* target;
};

std::vector<Blob> blobs(TrainState& st, Mat& mean_future) {
  std::vector<Blob> out;
  auto params = st.model.parameters();
  for (Param* p : params) out.push_back({p->name, &p->value, &p->value});
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back({"adam.m/" + params[i]->name, &st.adam.m[i], &st.adam.m[i]});
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back({"adam.v/" + params[i]->name, &st.adam.v[i], &st.adam.v[i]});
  out.push_back({"mean_future", &mean_future, &mean_future});
  return out;
}

Mat mean_future_matrix(const std::vector<Point2>& mf) {
  Mat m(2, static_cast<Eigen::Index>(mf.size()));
  for (std::size_t i = 0; i < mf.size(); ++i) m.col(i) << mf[i].x, mf[i].y;
  return m;
}

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get(const std::string& in, std::size_t pos) {
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  TrainState st = ckpt.state;
  if (st.adam.m.size() != st.model.parameters().size()) st.adam = make_adam_state(st.model.parameters());
  Mat mf = mean_future_matrix(st.model.mean_future);

  json manifest;
  manifest["model_config"] = model_config_json(st.model.config);
  manifest["train_config"] = train_config_json(ckpt.train_config);
  manifest["update"] = st.update;
  manifest["adam"] = {{"beta1", st.adam.beta1}, {"beta2", st.adam.beta2}, {"eps", st.adam.eps}, {"step", st.adam.step}};
  json tensors = json::array();
  std::string data;
  for (const Blob& b : blobs(st, mf)) {
    tensors.push_back({{"name", b.name},
                       {"shape", {b.value->rows(), b.value->cols()}},
                       {"dtype", "f32"},
                       {"offset", data.size()}});
    for (Eigen::Index i = 0; i < b.value->size(); ++i) put<float>(data, static_cast<float>(b.value->data()[i]));
  }
  manifest["tensors"] = tensors;
  manifest["data_bytes"] = data.size();

  const std::string text = manifest.dump();
  std::string out = "MFPC";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  out += data;
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "MFPC") != 0) throw NotACheckpointError("not a checkpoint (bad magic)");
  if (bytes.size() < 16) throw TruncatedCheckpointError("checkpoint truncated in header");
  const auto version = get<std::uint32_t>(bytes, 4);
  if (version != kCheckpointVersion)
    throw UnsupportedVersionError("unsupported checkpoint version " + std::to_string(version) + " (this build reads version " +
                                  std::to_string(kCheckpointVersion) + ")");
  const auto len = get<std::uint64_t>(bytes, 8);
  if (len > bytes.size() - 16) throw TruncatedCheckpointError("checkpoint truncated in manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(16, len));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  const std::size_t base = 16 + len;

  Checkpoint ckpt;
  try {
    ckpt.train_config = train_config_from(manifest.at("train_config"));
    const ModelConfig mc = model_config_from(manifest.at("model_config"));
    ckpt.state.model = Model{mc, allocate_params(mc), {}};
    ckpt.state.update = manifest.at("update");
    ckpt.state.adam = make_adam_state(ckpt.state.model.parameters());
    const json& a = manifest.at("adam");
    ckpt.state.adam.beta1 = a.at("beta1");
    ckpt.state.adam.beta2 = a.at("beta2");
    ckpt.state.adam.eps = a.at("eps");
    ckpt.state.adam.step = a.at("step");
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint manifest: ") + e.what());
  }

  const json& tensors = manifest.at("tensors");
  Mat mf;
  auto expected = blobs(ckpt.state, mf);
  if (tensors.size() != expected.size()) throw CheckpointError("checkpoint tensor list does not match the model");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const json& t = tensors[i];
    const Blob& b = expected[i];
    if (t.at("name") != b.name) throw CheckpointError("checkpoint tensor '" + t.at("name").get<std::string>() + "' unexpected");
    const Eigen::Index rows = t.at("shape")[0], cols = t.at("shape")[1];
    if (b.target != &mf && (rows != b.target->rows() || cols != b.target->cols()))
      throw CheckpointError("checkpoint tensor '" + b.name + "' has the wrong shape");
    if (t.at("dtype") != "f32") throw CheckpointError("checkpoint tensor '" + b.name + "' has unsupported dtype");
    const std::size_t off = base + t.at("offset").get<std::size_t>();
    const std::size_t need = static_cast<std::size_t>(rows * cols) * sizeof(float);
    if (off > bytes.size() || need > bytes.size() - off)
      throw TruncatedCheckpointError("checkpoint truncated in tensor section at '" + b.name + "'");
    b.target->resize(rows, cols);
    for (Eigen::Index j = 0; j < rows * cols; ++j) b.target->data()[j] = get<float>(bytes, off + j * sizeof(float));
  }
  const std::size_t data_bytes = manifest.value("data_bytes", std::size_t{0});
  if (bytes.size() - base < data_bytes) throw TruncatedCheckpointError("checkpoint truncated in tensor section");
  for (Eigen::Index j = 0; j < mf.cols(); ++j) ckpt.state.model.mean_future.push_back({mf(0, j), mf(1, j)});
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace mfp
