#include "pcunet/mask_ops.hpp"

#include <algorithm>

namespace pcunet {

std::optional<BoundingBox> foreground_bounds(const MaskVolume& mask) {
    const auto& s = mask.shape();
    BoundingBox box{{s[0], s[1], s[2]}, {-1, -1, -1}};
    bool any = false;
    for (std::int64_t z = 0; z < s[2]; ++z)
        for (std::int64_t y = 0; y < s[1]; ++y)
            for (std::int64_t x = 0; x < s[0]; ++x) {
                if (!mask.at(x, y, z)) continue;
                any = true;
                const Index3 p{x, y, z};
                for (int a = 0; a < 3; ++a) {
                    box.lo[a] = std::min(box.lo[a], p[a]);
                    box.hi[a] = std::max(box.hi[a], p[a]);
                }
            }
    if (!any) return std::nullopt;
    return box;
}

std::vector<Index3> boundary_voxels(const MaskVolume& mask) {
    const auto& g = mask.geometry();
    const auto& s = g.shape;
    static constexpr int kOffsets[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                           {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
    std::vector<Index3> out;
    for (std::int64_t z = 0; z < s[2]; ++z)
        for (std::int64_t y = 0; y < s[1]; ++y)
            for (std::int64_t x = 0; x < s[0]; ++x) {
                if (!mask.at(x, y, z)) continue;
                for (const auto& o : kOffsets) {
                    const Index3 n{x + o[0], y + o[1], z + o[2]};
                    if (!g.contains(n) || !mask.at(n[0], n[1], n[2])) {
                        out.push_back({x, y, z});
                        break;
                    }
                }
            }
    return out;
}

namespace {

MaskVolume morph(const MaskVolume& mask, bool dilation) {
    const auto& g = mask.geometry();
    const auto& s = g.shape;
    std::vector<std::uint8_t> out(mask.size(), 0);
    for (std::int64_t z = 0; z < s[2]; ++z)
        for (std::int64_t y = 0; y < s[1]; ++y)
            for (std::int64_t x = 0; x < s[0]; ++x) {
                // Dilation: any neighbour set. Erosion: all neighbours set.
                bool result = !dilation;
                for (int dz = -1; dz <= 1; ++dz)
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const Index3 n{x + dx, y + dy, z + dz};
                            const bool v = g.contains(n) && mask.at(n[0], n[1], n[2]);
                            if (dilation && v) result = true;
                            if (!dilation && !v) result = false;
                        }
                out[g.offset(x, y, z)] = result ? 1 : 0;
            }
    return MaskVolume(g, std::move(out));
}

}  // namespace

MaskVolume dilate(const MaskVolume& mask) { return morph(mask, true); }
MaskVolume erode(const MaskVolume& mask) { return morph(mask, false); }

std::size_t connected_components(const MaskVolume& mask) {
    const auto& g = mask.geometry();
    std::vector<std::uint8_t> seen(mask.size(), 0);
    std::vector<Index3> stack;
    std::size_t count = 0;
    const auto& s = g.shape;
    for (std::int64_t z = 0; z < s[2]; ++z)
        for (std::int64_t y = 0; y < s[1]; ++y)
            for (std::int64_t x = 0; x < s[0]; ++x) {
                const auto off = g.offset(x, y, z);
                if (!mask[off] || seen[off]) continue;
                ++count;
                seen[off] = 1;
                stack.push_back({x, y, z});
                while (!stack.empty()) {
                    const Index3 p = stack.back();
                    stack.pop_back();
                    for (int dz = -1; dz <= 1; ++dz)
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) {
                                const Index3 n{p[0] + dx, p[1] + dy, p[2] + dz};
                                if (!g.contains(n)) continue;
                                const auto no = g.offset(n[0], n[1], n[2]);
                                if (mask[no] && !seen[no]) {
                                    seen[no] = 1;
                                    stack.push_back(n);
                                }
                            }
                }
            }
    return count;
}

}  // namespace pcunet
