#include "gmp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <openssl/evp.h>

namespace gmp {
namespace {

constexpr char kMagic[8] = {'G', 'M', 'P', 'C', 'K', 'P', 'T', '\0'};
constexpr std::size_t kDigestSize = 32;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  const char* take(std::size_t n) {
    need(n);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw Error("corrupt checkpoint: truncated");
  }
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::string sha256_raw(const char* data, std::size_t n) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, n, md, &len, EVP_sha256(), nullptr) != 1 || len != kDigestSize) {
    throw Error("sha256 failed");
  }
  return std::string(reinterpret_cast<const char*>(md), len);
}

std::string to_hex(const std::string& raw) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned char c : raw) {
    out += digits[c >> 4];
    out += digits[c & 15];
  }
  return out;
}

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

void Checkpoint::put(const std::string& name, const Eigen::MatrixXd& m) {
  Tensor t;
  t.shape = {m.rows(), m.cols()};
  t.data.assign(m.data(), m.data() + m.size());
  tensors[name] = std::move(t);
}

Eigen::MatrixXd Checkpoint::matrix(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error("checkpoint has no tensor '" + name + "'");
  const auto& t = it->second;
  if (t.shape.size() != 2) throw DimensionError("tensor '" + name + "' is not a matrix");
  return Eigen::Map<const Eigen::MatrixXd>(t.data.data(), t.shape[0], t.shape[1]);
}

Eigen::VectorXd Checkpoint::vector(const std::string& name) const {
  const Eigen::MatrixXd m = matrix(name);
  if (m.cols() != 1) throw DimensionError("tensor '" + name + "' is not a column vector");
  return m.col(0);
}

const std::string& Checkpoint::meta(const std::string& key) const {
  auto it = metadata.find(key);
  if (it == metadata.end()) throw Error("checkpoint has no metadata key '" + key + "'");
  return it->second;
}

std::string checkpoint_to_bytes(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.str(k);
    w.str(v);
  }
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    if (element_count(t.shape) != static_cast<std::int64_t>(t.data.size())) {
      throw DimensionError("tensor '" + name + "' shape does not match its data");
    }
    w.str(name);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.pod<std::int64_t>(d);
    w.pod<std::uint64_t>(offset);
    offset += t.data.size();
  }
  w.pod<std::uint64_t>(offset);
  for (const auto& [name, t] : ckpt.tensors) {
    w.raw(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
  }
  const std::string digest = sha256_raw(w.bytes().data(), w.bytes().size());
  w.raw(digest.data(), digest.size());
  return std::move(w.bytes());
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 4) throw Error("corrupt checkpoint: truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error("corrupt checkpoint: bad magic");
  }
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), 4);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) +
                       " is not supported (expected " + std::to_string(kCheckpointVersion) +
                       ")");
  }
  if (bytes.size() < sizeof(kMagic) + 4 + kDigestSize) {
    throw Error("corrupt checkpoint: truncated");
  }
  const std::size_t body = bytes.size() - kDigestSize;
  if (sha256_raw(bytes.data(), body) != bytes.substr(body)) {
    throw Error("corrupt checkpoint: digest mismatch");
  }

  Reader r(bytes, body);
  r.take(sizeof(kMagic) + 4);
  Checkpoint ckpt;
  const auto nmeta = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = r.str();
    ckpt.metadata[k] = r.str();
  }
  struct Entry {
    std::string name;
    std::vector<std::int64_t> shape;
    std::uint64_t offset;
  };
  std::vector<Entry> index;
  const auto ntensors = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < ntensors; ++i) {
    Entry e;
    e.name = r.str();
    const auto ndim = r.pod<std::uint32_t>();
    if (ndim > 8) throw Error("corrupt checkpoint: tensor rank " + std::to_string(ndim));
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const auto dim = r.pod<std::int64_t>();
      if (dim < 0) throw Error("corrupt checkpoint: negative dimension");
      e.shape.push_back(dim);
    }
    e.offset = r.pod<std::uint64_t>();
    index.push_back(std::move(e));
  }
  const auto total = r.pod<std::uint64_t>();
  if (total > (body - r.pos()) / sizeof(double)) throw Error("corrupt checkpoint: truncated");
  const char* data = r.take(total * sizeof(double));
  if (r.pos() != body) throw Error("corrupt checkpoint: trailing bytes");
  for (auto& e : index) {
    const auto n = static_cast<std::uint64_t>(element_count(e.shape));
    if (e.offset > total || n > total - e.offset) {
      throw Error("corrupt checkpoint: tensor '" + e.name + "' out of range");
    }
    Tensor t;
    t.shape = e.shape;
    t.data.resize(n);
    std::memcpy(t.data.data(), data + e.offset * sizeof(double), n * sizeof(double));
    ckpt.tensors[e.name] = std::move(t);
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = checkpoint_to_bytes(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes);
}

std::string sha256_hex(const std::string& bytes) {
  return to_hex(sha256_raw(bytes.data(), bytes.size()));
}

std::string parameter_digest(const Checkpoint& ckpt, const std::string& prefix) {
  Writer w;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    w.str(name);
    for (auto d : t.shape) w.pod<std::int64_t>(d);
    w.raw(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
  }
  return sha256_hex(w.bytes());
}

void put_mlp(Checkpoint& ckpt, const std::string& prefix, const Mlp& net) {
  std::ostringstream sizes, acts;
  for (size_t i = 0; i < net.sizes().size(); ++i) sizes << (i ? "," : "") << net.sizes()[i];
  for (size_t i = 0; i < net.activations().size(); ++i) {
    acts << (i ? "," : "") << activation_name(net.activations()[i]);
  }
  ckpt.metadata[prefix + ".sizes"] = sizes.str();
  ckpt.metadata[prefix + ".activations"] = acts.str();
  for (int l = 0; l < net.layer_count(); ++l) {
    ckpt.put(prefix + "." + std::to_string(l) + ".weight", net.weight(l));
    ckpt.put(prefix + "." + std::to_string(l) + ".bias", net.bias(l));
  }
}

Mlp get_mlp(const Checkpoint& ckpt, const std::string& prefix) {
  std::vector<int> sizes;
  std::vector<Activation> acts;
  {
    std::istringstream in(ckpt.meta(prefix + ".sizes"));
    std::string item;
    while (std::getline(in, item, ',')) sizes.push_back(std::stoi(item));
  }
  {
    std::istringstream in(ckpt.meta(prefix + ".activations"));
    std::string item;
    while (std::getline(in, item, ',')) acts.push_back(activation_from_name(item));
  }
  if (sizes.size() < 2 || acts.size() != sizes.size() - 1) {
    throw Error("checkpoint architecture for '" + prefix + "' is inconsistent");
  }
  for (size_t i = 0; i + 1 < acts.size(); ++i) {
    if (acts[i] != acts[0]) throw Error("mixed hidden activations are not supported");
  }
  Mlp net(sizes, acts.size() > 1 ? acts[0] : acts.back(), acts.back());
  for (int l = 0; l < net.layer_count(); ++l) {
    const Eigen::MatrixXd w = ckpt.matrix(prefix + "." + std::to_string(l) + ".weight");
    const Eigen::VectorXd b = ckpt.vector(prefix + "." + std::to_string(l) + ".bias");
    if (w.rows() != net.weight(l).rows() || w.cols() != net.weight(l).cols() ||
        b.size() != net.bias(l).size()) {
      throw DimensionError("checkpoint layer " + std::to_string(l) + " of '" + prefix +
                           "' has the wrong shape");
    }
    net.weight(l) = w;
    net.bias(l) = b;
  }
  return net;
}

}  // namespace gmp
