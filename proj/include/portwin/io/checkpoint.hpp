#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "portwin/core/bytes.hpp"
#include "portwin/core/error.hpp"
#include "portwin/grid/hierarchy.hpp"
#include "portwin/runtime/simulation.hpp"
#include "portwin/solver/types.hpp"

namespace portwin {

// Little-endian binary: "PWCK" | version u32 | grid config | fluid | boundaries
// | step i64 | refinement log | blocks (uid, step, raw ghost-padded arrays)
// | CRC-32 of everything before it.
inline constexpr char kCheckpointMagic[4] = {'P', 'W', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct SimulationState {
  GridHierarchy hierarchy;
  FluidProps fluid;
  BoundarySpec boundaries;
  std::int64_t step = 0;
};

namespace detail {

using FileReader = BasicByteReader<IntegrityError>;

inline void put_int3(ByteWriter& w, const Int3& v) {
  for (int x : v) w.i32(x);
}

inline Int3 get_int3(FileReader& r) {
  Int3 v;
  for (int& x : v) x = r.i32();
  return v;
}

inline void put_doubles(ByteWriter& w, const std::vector<double>& v) {
  w.bytes(reinterpret_cast<const std::uint8_t*>(v.data()), v.size() * sizeof(double));
}

inline void get_doubles(FileReader& r, std::vector<double>& v) {
  const std::uint8_t* p = r.bytes(v.size() * sizeof(double));
  std::memcpy(v.data(), p, v.size() * sizeof(double));
}

// Parents in the order they were refined; replaying this order reproduces
// every uid.
inline std::vector<Uid> refinement_log(const GridHierarchy& h) {
  std::vector<std::pair<std::uint32_t, Uid>> order;
  for (const auto& [uid, g] : h.grids()) {
    if (g.children.empty()) continue;
    std::uint32_t first = g.children.front().local_id();
    for (Uid c : g.children) first = std::min(first, c.local_id());
    order.emplace_back(first, uid);
  }
  std::sort(order.begin(), order.end());
  std::vector<Uid> out;
  for (const auto& [k, u] : order) out.push_back(u);
  return out;
}

}  // namespace detail

inline ByteBuffer encode_checkpoint(const GridHierarchy& h, const FluidProps& fluid, const BoundarySpec& spec,
                                    std::int64_t step) {
  if (!h.has_fields()) throw PreconditionError("checkpoint needs a hierarchy with field data");
  ByteWriter w;
  w.bytes(reinterpret_cast<const std::uint8_t*>(kCheckpointMagic), 4);
  w.u32(kCheckpointVersion);
  const GridConfig& c = h.config();
  w.vec3(c.domain_min);
  w.vec3(c.domain_max);
  detail::put_int3(w, c.root_refine);
  detail::put_int3(w, c.sub_refine);
  detail::put_int3(w, c.block_size);
  w.i32(c.max_depth);
  w.f64(fluid.nu);
  w.f64(fluid.rho);
  w.vec3(fluid.gravity);
  w.vec3(fluid.body_force);
  w.vec3(spec.inflow);
  w.f64(spec.p_out);
  for (BoundaryKind k : spec.faces) w.u8(static_cast<std::uint8_t>(k));
  w.i64(step);
  const std::vector<Uid> log = detail::refinement_log(h);
  w.u64(log.size());
  for (Uid u : log) w.u64(u.packed);
  w.u64(h.data().size());
  for (const auto& [uid, d] : h.data()) {
    w.u64(uid.packed);
    w.i64(d.step);
    for (int a = 0; a < 3; ++a) detail::put_doubles(w, d.vel[a].raw());
    detail::put_doubles(w, d.p.raw());
    for (int a = 0; a < 3; ++a) detail::put_doubles(w, d.h_prev[a].raw());
    const auto& f = d.flag.raw();
    w.bytes(reinterpret_cast<const std::uint8_t*>(f.data()), f.size());
  }
  const std::uint32_t crc = static_cast<std::uint32_t>(crc32(0L, w.buffer().data(), static_cast<uInt>(w.buffer().size())));
  w.u32(crc);
  return w.take();
}

inline ByteBuffer encode_checkpoint(const Snapshot& s) {
  return encode_checkpoint(s.hierarchy, s.props, s.boundaries, s.step);
}

inline SimulationState decode_checkpoint(const ByteBuffer& buf) {
  if (buf.size() < 12 || std::memcmp(buf.data(), kCheckpointMagic, 4) != 0) {
    throw IntegrityError("not a checkpoint file (bad magic)");
  }
  const std::size_t body = buf.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + body, 4);
  if (static_cast<std::uint32_t>(crc32(0L, buf.data(), static_cast<uInt>(body))) != stored) {
    throw IntegrityError("checkpoint checksum mismatch");
  }
  detail::FileReader r(buf.data() + 4, body - 4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  GridConfig c;
  c.domain_min = r.vec3();
  c.domain_max = r.vec3();
  c.root_refine = detail::get_int3(r);
  c.sub_refine = detail::get_int3(r);
  c.block_size = detail::get_int3(r);
  c.max_depth = r.i32();
  SimulationState st;
  st.fluid.nu = r.f64();
  st.fluid.rho = r.f64();
  st.fluid.gravity = r.vec3();
  st.fluid.body_force = r.vec3();
  st.boundaries.inflow = r.vec3();
  st.boundaries.p_out = r.f64();
  for (auto& k : st.boundaries.faces) {
    const std::uint8_t v = r.u8();
    if (v > 3) throw IntegrityError("bad boundary kind in checkpoint");
    k = static_cast<BoundaryKind>(v);
  }
  st.step = r.i64();
  try {
    st.hierarchy = GridHierarchy::build(c, 0);
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("checkpoint grid configuration invalid: ") + e.what());
  }
  const std::uint64_t nlog = r.u64();
  if (nlog > r.remaining() / 8) throw IntegrityError("refinement log exceeds file size");
  for (std::uint64_t i = 0; i < nlog; ++i) {
    const Uid parent{r.u64()};
    try {
      st.hierarchy.refine(parent);
    } catch (const Error& e) {
      throw IntegrityError(std::string("refinement log cannot be replayed: ") + e.what());
    }
  }
  const std::uint64_t nblocks = r.u64();
  if (nblocks != st.hierarchy.data().size()) throw IntegrityError("block count does not match the refinement log");
  for (std::uint64_t i = 0; i < nblocks; ++i) {
    const Uid uid{r.u64()};
    if (!st.hierarchy.contains(uid)) throw IntegrityError("unknown block uid in checkpoint");
    DataGrid& d = st.hierarchy.block(uid);
    d.step = r.i64();
    for (int a = 0; a < 3; ++a) detail::get_doubles(r, d.vel[a].raw());
    detail::get_doubles(r, d.p.raw());
    for (int a = 0; a < 3; ++a) detail::get_doubles(r, d.h_prev[a].raw());
    auto& f = d.flag.raw();
    const std::uint8_t* p = r.bytes(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) {
      if (p[k] > static_cast<std::uint8_t>(CellFlag::Slip)) throw IntegrityError("bad cell flag in checkpoint");
      f[k] = static_cast<CellFlag>(p[k]);
    }
  }
  r.expect_end();
  return st;
}

/// Writes through a temporary file renamed into place.
inline void save_checkpoint(const ByteBuffer& data, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + tmp + "'");
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("failed writing checkpoint '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move checkpoint into '" + path + "'");
}

inline SimulationState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  const std::string text = s.str();
  return decode_checkpoint(ByteBuffer(text.begin(), text.end()));
}

/// Largest absolute difference of velocity and pressure over the interior
/// cells of two states with identical topology.
inline double max_field_difference(const GridHierarchy& a, const GridHierarchy& b) {
  if (a.grids().size() != b.grids().size()) throw PreconditionError("states have different topology");
  double m = 0;
  for (const auto& [uid, da] : a.data()) {
    const DataGrid& db = b.block(uid);
    const Int3 n = da.cells();
    for (int k = 0; k < n[2]; ++k)
      for (int j = 0; j < n[1]; ++j)
        for (int i = 0; i < n[0]; ++i) {
          m = std::max(m, std::abs(da.p(i, j, k) - db.p(i, j, k)));
          for (int c = 0; c < 3; ++c) m = std::max(m, std::abs(da.vel[c](i, j, k) - db.vel[c](i, j, k)));
        }
  }
  return m;
}

}  // namespace portwin
