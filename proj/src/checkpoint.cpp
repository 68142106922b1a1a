// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#include "ptp/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace ptp {

namespace {

constexpr const char* kMagic = "ptp-checkpoint v1";

std::string embedding_name(RegisterEmbedding mode) {
  return mode == RegisterEmbedding::kShared ? "shared" : "distinct";
}

RegisterEmbedding embedding_from_name(const std::string& name) {
  if (name == "shared") return RegisterEmbedding::kShared;
  if (name == "distinct") return RegisterEmbedding::kDistinct;
  throw std::runtime_error("unknown register embedding mode: " + name);
}

// floats are written little-endian; asserted at build time for this target
void write_f32(std::ostream& os, const double* data, size_t n) {
  static_assert(sizeof(float) == 4);
  std::vector<float> buf(n);
  for (size_t i = 0; i < n; ++i) buf[i] = static_cast<float>(data[i]);
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(n * sizeof(float)));
}

void read_f32(std::istream& is, double* data, size_t n) {
  std::vector<float> buf(n);
  is.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (!is) throw std::runtime_error("checkpoint truncated");
  for (size_t i = 0; i < n; ++i) data[i] = static_cast<double>(buf[i]);
}

}  // namespace

void save_checkpoint(const ModelParams& params, std::ostream& os) {
  const ModelConfig& c = params.config;
  os << kMagic << '\n';
  os << "vocab_size " << c.vocab_size << '\n';
  os << "d_model " << c.d_model << '\n';
  os << "n_layers " << c.n_layers << '\n';
  os << "n_heads " << c.n_heads << '\n';
  os << "d_ff " << c.d_ff << '\n';
  os << "max_position " << c.max_position << '\n';
  os << "register_embedding " << embedding_name(c.register_embedding) << '\n';
  os << "register_max_offset " << c.register_max_offset << '\n';
  visit_tensors(params, [&os](const std::string& name, const double*, int rows,
                              int cols) {
    os << "tensor " << name << ' ' << rows << ' ' << cols << " f32\n";
  });
  os << "data\n";
  visit_tensors(params, [&os](const std::string&, const double* data, int rows,
                              int cols) {
    // row-major on disk regardless of in-memory layout
    std::vector<double> rowmajor(static_cast<size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
      for (int col = 0; col < cols; ++col) {
        rowmajor[static_cast<size_t>(r) * cols + col] =
            data[static_cast<size_t>(col) * rows + r];
      }
    }
    write_f32(os, rowmajor.data(), rowmajor.size());
  });
}

ModelParams load_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMagic) {
    throw std::runtime_error("not a checkpoint file");
  }
  ModelConfig config;
  std::map<std::string, std::pair<int, int>> shapes;
  std::vector<std::string> order;
  while (std::getline(is, line)) {
    if (line == "data") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "tensor") {
      std::string name, dtype;
      int rows = 0, cols = 0;
      ls >> name >> rows >> cols >> dtype;
      if (!ls || dtype != "f32") {
        throw std::runtime_error("bad tensor header line: " + line);
      }
      shapes[name] = {rows, cols};
      order.push_back(name);
    } else if (key == "vocab_size") {
      ls >> config.vocab_size;
    } else if (key == "d_model") {
      ls >> config.d_model;
    } else if (key == "n_layers") {
      ls >> config.n_layers;
    } else if (key == "n_heads") {
      ls >> config.n_heads;
    } else if (key == "d_ff") {
      ls >> config.d_ff;
    } else if (key == "max_position") {
      ls >> config.max_position;
    } else if (key == "register_embedding") {
      std::string mode;
      ls >> mode;
      config.register_embedding = embedding_from_name(mode);
    } else if (key == "register_max_offset") {
      ls >> config.register_max_offset;
    } else {
      throw std::runtime_error("unknown checkpoint header key: " + key);
    }
    if (!ls) throw std::runtime_error("bad checkpoint header line: " + line);
  }
  config.validate();

  ModelParams params = init_params(config, 0);
  size_t idx = 0;
  visit_tensors(params, [&](const std::string& name, double* data, int rows,
                            int cols) {
    if (idx >= order.size() || order[idx] != name) {
      throw std::runtime_error("checkpoint tensor order mismatch at " + name);
    }
    const auto& shape = shapes.at(name);
    if (shape.first != rows || shape.second != cols) {
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    }
    std::vector<double> rowmajor(static_cast<size_t>(rows) * cols);
    read_f32(is, rowmajor.data(), rowmajor.size());
    for (int r = 0; r < rows; ++r) {
      for (int col = 0; col < cols; ++col) {
        data[static_cast<size_t>(col) * rows + r] =
            rowmajor[static_cast<size_t>(r) * cols + col];
      }
    }
    ++idx;
  });
  if (idx != order.size()) {
    throw std::runtime_error("checkpoint lists tensors the model lacks");
  }
  return params;
}

void save_checkpoint_file(const ModelParams& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  save_checkpoint(params, os);
  if (!os) throw std::runtime_error("failed writing checkpoint " + path);
}

ModelParams load_checkpoint_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  return load_checkpoint(is);
}

}  // namespace ptp
