#include "smem/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "smem/error.hpp"

namespace smem {

namespace {

constexpr char kCkptMagic[8] = {'S', 'M', 'E', 'M', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCkptVersion = 1;

void put_u32(std::ofstream& out, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff), static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void put_u64(std::ofstream& out, uint64_t v) {
  put_u32(out, static_cast<uint32_t>(v & 0xffffffffULL));
  put_u32(out, static_cast<uint32_t>(v >> 32));
}

struct Reader {
  std::ifstream in;
  std::filesystem::path path;
  size_t offset = 0;

  void take(void* dst, size_t n) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
      fail(ErrorKind::kFormat, path.string() + ": truncated at byte offset " + std::to_string(offset));
    offset += n;
  }
  uint32_t take_u32() {
    unsigned char b[4];
    take(b, 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
  }
  uint64_t take_u64() {
    const uint64_t lo = take_u32();
    const uint64_t hi = take_u32();
    return lo | (hi << 32);
  }
};

int checked_dim(Reader& r, const char* what) {
  const uint32_t v = r.take_u32();
  if (v == 0 || v > (1u << 24)) fail(ErrorKind::kFormat, r.path.string() + ": implausible " + what + " in header");
  return static_cast<int>(v);
}

void expect_shape(const Checkpoint& ckpt, const std::string& name, const std::vector<int>& shape) {
  const Tensor& t = ckpt.tensor(name);
  if (t.shape() == shape) return;
  Tensor want = Tensor::zeros(shape);
  fail(ErrorKind::kData,
       "checkpoint tensor " + name + ": shape " + t.shape_string() + ", expected " + want.shape_string());
}

}  // namespace

const char* model_kind_name(ModelKind kind) { return kind == ModelKind::kSMem ? "smem" : "ibowimg"; }

const char* feature_source_name(FeatureSource source) {
  switch (source) {
    case FeatureSource::kGridPatch:
      return "grid-patch";
    case FeatureSource::kTinyConv:
      return "tiny-conv";
    default:
      return "precomputed";
  }
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header,
                     const std::vector<std::pair<std::string, Tensor*>>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(kCkptMagic, 8);
  put_u32(out, kCkptVersion);
  put_u32(out, static_cast<uint32_t>(header.kind));
  put_u32(out, static_cast<uint32_t>(header.source));
  for (int dim : {header.embed, header.feature, header.locations, header.question, header.classes, header.hops,
                  header.grid_rows, header.grid_cols})
    put_u32(out, static_cast<uint32_t>(dim));
  put_u64(out, header.vocab_hash);
  put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<uint32_t>(tensor->rank()));
    for (int axis = 0; axis < tensor->rank(); ++axis) put_u32(out, static_cast<uint32_t>(tensor->extent(axis)));
    for (int i = 0; i < tensor->numel(); ++i) {
      uint64_t bits;
      const double v = (*tensor)[i];
      std::memcpy(&bits, &v, 8);
      put_u64(out, bits);
    }
  }
  if (!out) fail(ErrorKind::kIo, "write failed for " + path.string());
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [key, t] : tensors)
    if (key == name) return t;
  fail(ErrorKind::kData, "checkpoint has no tensor named " + name);
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [key, t] : tensors)
    if (key == name) return true;
  return false;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r{std::ifstream(path, std::ios::binary), path};
  if (!r.in) fail(ErrorKind::kIo, "cannot open " + path.string());
  char magic[8];
  r.take(magic, 8);
  if (std::memcmp(magic, kCkptMagic, 8) != 0)
    fail(ErrorKind::kFormat, path.string() + ": bad magic at byte offset 0 (expected SMEMCKPT)");
  const uint32_t version = r.take_u32();
  if (version != kCkptVersion) fail(ErrorKind::kFormat, path.string() + ": unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  const uint32_t kind = r.take_u32();
  if (kind > 1) fail(ErrorKind::kFormat, path.string() + ": unknown model kind " + std::to_string(kind));
  ckpt.header.kind = static_cast<ModelKind>(kind);
  const uint32_t source = r.take_u32();
  if (source > 2) fail(ErrorKind::kFormat, path.string() + ": unknown feature source " + std::to_string(source));
  ckpt.header.source = static_cast<FeatureSource>(source);
  ckpt.header.embed = checked_dim(r, "embedding dim");
  ckpt.header.feature = checked_dim(r, "feature dim");
  ckpt.header.locations = checked_dim(r, "location count");
  ckpt.header.question = checked_dim(r, "question capacity");
  ckpt.header.classes = checked_dim(r, "class count");
  ckpt.header.hops = checked_dim(r, "hop count");
  ckpt.header.grid_rows = static_cast<int>(r.take_u32());
  ckpt.header.grid_cols = static_cast<int>(r.take_u32());
  ckpt.header.vocab_hash = r.take_u64();

  const uint32_t count = r.take_u32();
  if (count > 4096) fail(ErrorKind::kFormat, path.string() + ": implausible tensor count " + std::to_string(count));
  for (uint32_t t = 0; t < count; ++t) {
    const uint32_t name_len = r.take_u32();
    if (name_len == 0 || name_len > 256)
      fail(ErrorKind::kFormat, path.string() + ": implausible tensor name length at byte offset " +
                                   std::to_string(r.offset - 4));
    std::string name(name_len, '\0');
    r.take(name.data(), name_len);
    const uint32_t rank = r.take_u32();
    if (rank == 0 || rank > 8)
      fail(ErrorKind::kFormat, path.string() + ": implausible tensor rank at byte offset " + std::to_string(r.offset - 4));
    std::vector<int> shape;
    size_t numel = 1;
    for (uint32_t axis = 0; axis < rank; ++axis) {
      const int dim = checked_dim(r, "tensor extent");
      shape.push_back(dim);
      numel *= static_cast<size_t>(dim);
    }
    Tensor tensor = Tensor::zeros(shape);
    for (size_t i = 0; i < numel; ++i) {
      const uint64_t bits = r.take_u64();
      double v;
      std::memcpy(&v, &bits, 8);
      tensor[static_cast<int>(i)] = v;
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(tensor));
  }
  return ckpt;
}

SMemParams smem_params_from(const Checkpoint& ckpt) {
  const CheckpointHeader& h = ckpt.header;
  if (h.kind != ModelKind::kSMem) fail(ErrorKind::kData, "checkpoint holds an ibowimg model, not smem");
  expect_shape(ckpt, "attn_w", {h.feature, h.embed});
  expect_shape(ckpt, "attn_b", {h.locations, h.embed});
  expect_shape(ckpt, "bow_w", {h.question});
  expect_shape(ckpt, "bow_b", {h.embed});
  expect_shape(ckpt, "out_w", {h.classes, h.embed});
  expect_shape(ckpt, "out_b", {h.classes});
  SMemParams p;
  p.embedding = ckpt.tensor("embedding");
  if (p.embedding.rank() != 2 || p.embedding.cols() != h.embed)
    fail(ErrorKind::kData, "checkpoint tensor embedding: shape " + p.embedding.shape_string());
  p.attn_w = ckpt.tensor("attn_w");
  p.attn_b = ckpt.tensor("attn_b");
  for (int hop = 1; hop <= h.hops; ++hop) {
    const std::string tag = std::to_string(hop);
    expect_shape(ckpt, "evid_w." + tag, {h.feature, h.embed});
    expect_shape(ckpt, "evid_b." + tag, {h.locations, h.embed});
    p.evid_w.push_back(ckpt.tensor("evid_w." + tag));
    p.evid_b.push_back(ckpt.tensor("evid_b." + tag));
  }
  p.bow_w = ckpt.tensor("bow_w");
  p.bow_b = ckpt.tensor("bow_b");
  p.out_w = ckpt.tensor("out_w");
  p.out_b = ckpt.tensor("out_b");
  return p;
}

IBowParams ibow_params_from(const Checkpoint& ckpt) {
  const CheckpointHeader& h = ckpt.header;
  if (h.kind != ModelKind::kIBow) fail(ErrorKind::kData, "checkpoint holds an smem model, not ibowimg");
  expect_shape(ckpt, "bow_w", {h.question});
  expect_shape(ckpt, "bow_b", {h.embed});
  expect_shape(ckpt, "out_w", {h.classes, h.feature + h.embed});
  expect_shape(ckpt, "out_b", {h.classes});
  IBowParams p;
  p.embedding = ckpt.tensor("embedding");
  if (p.embedding.rank() != 2 || p.embedding.cols() != h.embed)
    fail(ErrorKind::kData, "checkpoint tensor embedding: shape " + p.embedding.shape_string());
  p.bow_w = ckpt.tensor("bow_w");
  p.bow_b = ckpt.tensor("bow_b");
  p.out_w = ckpt.tensor("out_w");
  p.out_b = ckpt.tensor("out_b");
  return p;
}

}  // namespace smem
