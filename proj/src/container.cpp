#include "pcc/container.h"

#include <cstring>

#include "pcc/common.h"

namespace pcc {

namespace {
constexpr char kMagic[4] = {'I', 'P', 'D', 'A'};
}

std::vector<uint8_t> pack(const CompressedCloud& c) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u8(out, kContainerVersion);
  put_u8(out, c.flags);
  put_u32(out, c.n);
  put_u16(out, c.K);
  put_u16(out, c.k);
  put_u8(out, c.d);
  put_u8(out, c.L);
  put_f64(out, c.transform.scale);
  put_f64(out, c.transform.center.x);
  put_f64(out, c.transform.center.y);
  put_f64(out, c.transform.center.z);
  append_octree(out, c.octree);
  if (c.extended())
    for (float s : c.patch_scales) put_f32(out, s);
  put_u32(out, static_cast<uint32_t>(c.latent.size()));
  out.insert(out.end(), c.latent.begin(), c.latent.end());
  return out;
}

CompressedCloud unpack(std::span<const uint8_t> bytes) {
  ByteReader r(bytes.data(), bytes.size());
  const uint8_t* magic = r.bytes(4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw StreamError("container: bad magic");
  if (r.u8() != kContainerVersion) throw StreamError("container: unsupported version");
  CompressedCloud c;
  c.flags = r.u8();
  if (c.flags & ~kFlagExtended) throw StreamError("container: unknown flags");
  c.n = r.u32();
  c.K = r.u16();
  c.k = r.u16();
  c.d = r.u8();
  c.L = r.u8();
  if (c.n == 0 || c.K == 0 || c.k == 0 || c.d == 0 || c.L == 0)
    throw StreamError("container: zero extents");
  if (c.K < c.k) throw StreamError("container: K below k");
  c.transform.scale = r.f64();
  c.transform.center.x = r.f64();
  c.transform.center.y = r.f64();
  c.transform.center.z = r.f64();
  if (!(c.transform.scale > 0.0)) throw StreamError("container: bad transform scale");
  c.octree = read_octree(r);
  const size_t leaves = c.octree.leaf_count();  // validates the byte list
  if (c.extended()) {
    c.patch_scales.resize(leaves);
    for (size_t i = 0; i < leaves; ++i) c.patch_scales[i] = r.f32();
  }
  const uint32_t latent_len = r.u32();
  const uint8_t* latent = r.bytes(latent_len);
  c.latent.assign(latent, latent + latent_len);
  if (r.remaining() != 0) throw StreamError("container: trailing bytes");
  return c;
}

}  // namespace pcc
