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

#include "ddlink/channel.hpp"
#include "ddlink/io.hpp"
#include "ddlink/network.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ddlink {

/// One training example after materialization: the packed history of tau
/// estimated channels, the target-frame true channel, and the target-frame
/// estimate the receiver will equalize with.
struct SequenceExample {
    ad::Tensor history;
    CMatrix h_true;
    CMatrix h_est;
};

/// Dataset of channel trajectories of length tau + 1: frames [0, tau) are
/// history, frame tau is the target. Only path states and noise seeds are
/// stored; matrices are re-materialized on demand.
struct TrajectoryDataset {
    ChannelConfig channel;
    int tau = 0;
    std::vector<Trajectory> sequences;

    int size() const { return static_cast<int>(sequences.size()); }

    SequenceExample materialize(int index) const {
        const Trajectory& tr = sequences.at(static_cast<std::size_t>(index));
        SequenceExample ex;
        ex.history = pack_history(tr.estimated_history(0, tau));
        ex.h_true = tr.true_dd(tau);
        ex.h_est = tr.estimated_dd(tau);
        return ex;
    }
};

inline TrajectoryDataset generate_dataset(const ChannelConfig& cfg, int tau, int count,
                                          std::uint64_t seed) {
    cfg.validate();
    if (tau < 1) throw ConfigError("generate_dataset: tau must be >= 1");
    if (count < 1) throw ConfigError("generate_dataset: count must be >= 1");
    TrajectoryDataset ds;
    ds.channel = cfg;
    ds.tau = tau;
    ds.sequences.reserve(static_cast<std::size_t>(count));
    const Rng master(seed);
    for (int i = 0; i < count; ++i) {
        Rng stream = master.stream(0xDA7Au, static_cast<std::uint64_t>(i));
        ds.sequences.push_back(generate_trajectory(cfg, tau + 1, stream));
    }
    return ds;
}

inline constexpr char kDatasetMagic[9] = "DDLNDSET";
inline constexpr std::uint32_t kDatasetVersion = 1;

// Byte-exact layout (little-endian, trailing crc32; see docs/formats.md):
//   magic[8] version:u32
//   channel: m n paths max_delay : u32 x 4
//            max_doppler rho gain_variance offset_bound nmse : f64 x 5
//   tau:u32 sequence_count:u32
//   per sequence: estimate_seed:u64 frame_count:u32
//     per frame, per path: delay:i32 doppler:f64 gain_re:f64 gain_im:f64
//   crc32:u32

inline void save_dataset(const std::string& path, const TrajectoryDataset& ds) {
    ByteWriter w;
    w.raw(kDatasetMagic, 8);
    w.u32(kDatasetVersion);
    const ChannelConfig& c = ds.channel;
    w.u32(static_cast<std::uint32_t>(c.m));
    w.u32(static_cast<std::uint32_t>(c.n));
    w.u32(static_cast<std::uint32_t>(c.paths));
    w.u32(static_cast<std::uint32_t>(c.max_delay));
    w.f64(c.max_doppler);
    w.f64(c.rho);
    w.f64(c.gain_variance);
    w.f64(c.offset_bound);
    w.f64(c.nmse);
    w.u32(static_cast<std::uint32_t>(ds.tau));
    w.u32(static_cast<std::uint32_t>(ds.sequences.size()));
    for (const Trajectory& tr : ds.sequences) {
        w.u64(tr.estimate_seed);
        w.u32(static_cast<std::uint32_t>(tr.frames.size()));
        for (const auto& frame : tr.frames)
            for (const PathState& p : frame) {
                w.u32(static_cast<std::uint32_t>(p.delay_index));
                w.f64(p.doppler_index);
                w.f64(p.gain.real());
                w.f64(p.gain.imag());
            }
    }
    w.write_file_with_crc(path);
}

inline TrajectoryDataset load_dataset(const std::string& path) {
    ByteReader r = ByteReader::from_file_checked(path);
    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, kDatasetMagic, 8) != 0)
        throw IoError("'" + path + "' is not a trajectory dataset");
    const std::uint32_t version = r.u32();
    if (version != kDatasetVersion)
        throw IoError("dataset version " + std::to_string(version) + " is not supported");

    TrajectoryDataset ds;
    ChannelConfig& c = ds.channel;
    c.m = static_cast<int>(r.u32());
    c.n = static_cast<int>(r.u32());
    c.paths = static_cast<int>(r.u32());
    c.max_delay = static_cast<int>(r.u32());
    c.max_doppler = r.f64();
    c.rho = r.f64();
    c.gain_variance = r.f64();
    c.offset_bound = r.f64();
    c.nmse = r.f64();
    ds.tau = static_cast<int>(r.u32());
    const std::uint32_t count = r.u32();
    ds.sequences.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Trajectory tr;
        tr.cfg = c;
        tr.estimate_seed = r.u64();
        const std::uint32_t frames = r.u32();
        tr.frames.resize(frames);
        for (auto& frame : tr.frames) {
            frame.resize(static_cast<std::size_t>(c.paths));
            for (PathState& p : frame) {
                p.delay_index = static_cast<int>(r.u32());
                p.doppler_index = r.f64();
                const double re = r.f64();
                const double im = r.f64();
                p.gain = {re, im};
            }
        }
        ds.sequences.push_back(std::move(tr));
    }
    if (!r.at_end()) throw IoError("dataset has trailing bytes");
    return ds;
}

} // namespace ddlink
