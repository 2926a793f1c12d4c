// Copyright 2026 The codefend Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "codefend/core/tensor_archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "codefend/core/error.hpp"
#include "codefend/core/hash.hpp"

namespace codefend {

namespace {

constexpr std::string_view kMagic = "CDFARCH1";

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t read_u64(const std::string& in, std::size_t offset) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return v;
}

[[noreturn]] void corrupt(const std::string& why) {
  throw Error(ErrorCode::kCheckpointCorrupt, why);
}

}  // namespace

void TensorArchive::put(const std::string& name, std::vector<std::int64_t> shape,
                        std::vector<float> values) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  if (n != static_cast<std::int64_t>(values.size())) {
    throw Error(ErrorCode::kShapeMismatch,
                fmt::format("tensor '{}' has {} values for {} elements", name, values.size(), n));
  }
  tensors_[name] = NamedTensor{std::move(shape), std::move(values)};
}

const NamedTensor& TensorArchive::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) corrupt(fmt::format("missing tensor '{}'", name));
  return it->second;
}

std::string TensorArchive::serialize() const {
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors_) {
    index.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset},
                     {"count", t.values.size()}});
    offset += t.values.size();
  }
  const nlohmann::json header = {{"meta", meta_}, {"tensors", index}};
  const std::string header_text = header.dump();

  std::string out(kMagic);
  append_u64(out, header_text.size());
  out += header_text;
  out.reserve(out.size() + offset * 4 + 8);
  for (const auto& [name, t] : tensors_) {
    for (float v : t.values) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
    }
  }
  append_u64(out, Fnv1a().update(out).digest());
  return out;
}

TensorArchive TensorArchive::deserialize(const std::string& bytes) {
  if (bytes.size() < kMagic.size() + 16 || bytes.compare(0, kMagic.size(), kMagic) != 0) {
    corrupt("bad magic or truncated archive");
  }
  const std::size_t body = bytes.size() - 8;
  if (Fnv1a().update(std::string_view(bytes).substr(0, body)).digest() != read_u64(bytes, body)) {
    corrupt("checksum mismatch");
  }
  const std::uint64_t header_len = read_u64(bytes, kMagic.size());
  const std::size_t payload_start = kMagic.size() + 8 + header_len;
  if (payload_start > body) corrupt("header overruns archive");

  TensorArchive archive;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(kMagic.size() + 8, header_len));
    archive.meta_ = header.at("meta");
    for (const auto& entry : header.at("tensors")) {
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto count = entry.at("count").get<std::uint64_t>();
      if (payload_start + (offset + count) * 4 > body) corrupt("tensor overruns payload");
      std::vector<float> values(count);
      for (std::uint64_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        const std::size_t at = payload_start + (offset + i) * 4;
        for (int b = 0; b < 4; ++b) {
          bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + b])) << (8 * b);
        }
        values[i] = std::bit_cast<float>(bits);
      }
      archive.put(entry.at("name").get<std::string>(),
                  entry.at("shape").get<std::vector<std::int64_t>>(), std::move(values));
    }
  } catch (const nlohmann::json::exception& e) {
    corrupt(fmt::format("malformed header: {}", e.what()));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCheckpointCorrupt) throw;
    corrupt(e.detail());
  }
  return archive;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("cannot open '{}'", path.string()));
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("failed writing '{}'", path.string()));
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kMissingFile, fmt::format("cannot open '{}'", path.string()));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace codefend
