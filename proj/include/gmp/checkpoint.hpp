#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmp/error.hpp"
#include "gmp/mlp.hpp"

namespace gmp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class VersionError : public Error {
 public:
  explicit VersionError(const std::string& what) : Error(what) {}
};

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;  // column-major for matrices
};

// Named tensors plus free-form text metadata (epoch, losses, seed, ...).
struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> metadata;

  void put(const std::string& name, const Eigen::MatrixXd& m);
  Eigen::MatrixXd matrix(const std::string& name) const;
  Eigen::VectorXd vector(const std::string& name) const;
  bool has(const std::string& name) const { return tensors.count(name) > 0; }
  const std::string& meta(const std::string& key) const;
};

// Binary container, see docs/formats.md. Throws VersionError for an unknown
// version and Error("corrupt checkpoint: ...") for truncation or a digest
// mismatch.
std::string checkpoint_to_bytes(const Checkpoint& ckpt);
Checkpoint checkpoint_from_bytes(const std::string& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// SHA-256 of the serialized parameters under `prefix`, hex encoded.
std::string parameter_digest(const Checkpoint& ckpt, const std::string& prefix = "");
std::string sha256_hex(const std::string& bytes);

// Stores the architecture in metadata and one tensor per weight and bias.
void put_mlp(Checkpoint& ckpt, const std::string& prefix, const Mlp& net);
Mlp get_mlp(const Checkpoint& ckpt, const std::string& prefix);

}  // namespace gmp
