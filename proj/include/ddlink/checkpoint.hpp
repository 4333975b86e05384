// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include "ddlink/io.hpp"
#include "ddlink/network.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ddlink {

/// Optimizer moments and iteration counter carried by resumable checkpoints.
struct TrainingState {
    std::uint64_t iteration = 0;
    std::uint64_t epoch = 0;
    double best_validation = 0.0;
    std::vector<NamedTensor> moment1;
    std::vector<NamedTensor> moment2;
};

struct Checkpoint {
    NetworkParams params;
    std::uint64_t seed = 0;
    std::optional<TrainingState> training;
};

inline constexpr char kCheckpointMagic[9] = "DDLNCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Byte-exact layout (little-endian throughout, see docs/formats.md):
//   magic[8] version:u32 arch:str
//   m n k tau hidden conv_filters conv_kernel pool mod_order : u32 x 9
//   power_budget:f64 seed:u64 flags:u32 (bit 0: training state present)
//   [iteration:u64 epoch:u64 best_validation:f64]       when flagged
//   tensor_count:u32 { name:str rank:u32 dims:u32[rank] data:f64[] } ...
//   crc32:u32 of everything above
// Strings are u32 length + raw bytes. Training state stores the optimizer
// moments as tensors named "m1." / "m2." + parameter name.

namespace detail {

inline void write_tensor(ByteWriter& w, const NamedTensor& t) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.tensor.rank()));
    for (int d : t.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.tensor.values()) w.f64(v);
}

inline NamedTensor read_tensor(ByteReader& r) {
    NamedTensor t;
    t.name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw IoError("checkpoint tensor rank is implausible");
    ad::Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    std::vector<double> data(ad::numel(shape));
    for (auto& v : data) v = r.f64();
    t.tensor = ad::Tensor(std::move(shape), std::move(data));
    return t;
}

} // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    ByteWriter w;
    w.raw(kCheckpointMagic, 8);
    w.u32(kCheckpointVersion);
    w.str(ckpt.params.arch);
    const NetConfig& c = ckpt.params.cfg;
    for (int v : {c.m, c.n, c.k, c.tau, c.hidden, c.conv_filters, c.conv_kernel, c.pool, c.mod_order})
        w.u32(static_cast<std::uint32_t>(v));
    w.f64(c.power_budget);
    w.u64(ckpt.seed);
    w.u32(ckpt.training ? 1u : 0u);
    if (ckpt.training) {
        w.u64(ckpt.training->iteration);
        w.u64(ckpt.training->epoch);
        w.f64(ckpt.training->best_validation);
    }
    std::uint32_t count = static_cast<std::uint32_t>(ckpt.params.tensors.size());
    if (ckpt.training)
        count += static_cast<std::uint32_t>(ckpt.training->moment1.size() +
                                            ckpt.training->moment2.size());
    w.u32(count);
    for (const auto& t : ckpt.params.tensors) detail::write_tensor(w, t);
    if (ckpt.training) {
        for (const auto& t : ckpt.training->moment1)
            detail::write_tensor(w, NamedTensor{"m1." + t.name, t.tensor});
        for (const auto& t : ckpt.training->moment2)
            detail::write_tensor(w, NamedTensor{"m2." + t.name, t.tensor});
    }
    w.write_file_with_crc(path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    ByteReader r = ByteReader::from_file_checked(path);
    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw IoError("'" + path + "' is not a checkpoint file");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw IoError("checkpoint version " + std::to_string(version) + " is not supported");

    Checkpoint ckpt;
    ckpt.params.arch = r.str();
    NetConfig& c = ckpt.params.cfg;
    c.m = static_cast<int>(r.u32());
    c.n = static_cast<int>(r.u32());
    c.k = static_cast<int>(r.u32());
    c.tau = static_cast<int>(r.u32());
    c.hidden = static_cast<int>(r.u32());
    c.conv_filters = static_cast<int>(r.u32());
    c.conv_kernel = static_cast<int>(r.u32());
    c.pool = static_cast<int>(r.u32());
    c.mod_order = static_cast<int>(r.u32());
    c.power_budget = r.f64();
    ckpt.seed = r.u64();
    const std::uint32_t flags = r.u32();
    if (flags & 1u) {
        TrainingState ts;
        ts.iteration = r.u64();
        ts.epoch = r.u64();
        ts.best_validation = r.f64();
        ckpt.training = std::move(ts);
    }
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t = detail::read_tensor(r);
        if (t.name.rfind("m1.", 0) == 0) {
            if (!ckpt.training) throw IoError("optimizer tensor without training state");
            ckpt.training->moment1.push_back({t.name.substr(3), t.tensor});
        } else if (t.name.rfind("m2.", 0) == 0) {
            if (!ckpt.training) throw IoError("optimizer tensor without training state");
            ckpt.training->moment2.push_back({t.name.substr(3), t.tensor});
        } else {
            ckpt.params.tensors.push_back(std::move(t));
        }
    }
    if (!r.at_end()) throw IoError("checkpoint has trailing bytes");
    return ckpt;
}

/// Refuse a checkpoint whose recorded configuration or architecture does not
/// match what the caller is about to run.
inline void require_checkpoint_match(const Checkpoint& ckpt, const NetConfig& expected,
                                     const std::string& arch) {
    if (ckpt.params.arch != arch)
        throw IoError("checkpoint architecture '" + ckpt.params.arch + "' does not match '" +
                      arch + "'");
    if (!(ckpt.params.cfg == expected))
        throw IoError("checkpoint configuration (M, N, K, tau, ...) does not match the run");
}

} // namespace ddlink
