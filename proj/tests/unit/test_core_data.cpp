#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "pcunet/io.hpp"
#include "pcunet/types.hpp"

namespace fs = std::filesystem;
using namespace pcunet;

namespace {

fs::path temp_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / ("pcunet_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

GridGeometry geometry(Index3 shape, Vec3 spacing = {1, 1, 1}, Vec3 origin = {0, 0, 0}) {
    GridGeometry g;
    g.shape = shape;
    g.spacing = spacing;
    g.origin = origin;
    return g;
}

VoxelVolume random_volume(std::uint64_t seed, Index3 shape, Vec3 spacing, Vec3 origin) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n(0.0f, 500.0f);
    const auto g = geometry(shape, spacing, origin);
    std::vector<float> data(g.voxel_count());
    for (auto& v : data) v = n(rng);
    return VoxelVolume(g, std::move(data));
}

}  // namespace

TEST(VoxelToWorld, IdentityCase) {
    const auto w = voxel_to_world({0, 0, 0}, geometry({4, 4, 4}));
    EXPECT_EQ(w, (Vec3{0, 0, 0}));
}

TEST(VoxelToWorld, UnitSpacing) {
    EXPECT_EQ(voxel_to_world({2, 3, 4}, geometry({5, 5, 5})), (Vec3{2, 3, 4}));
}

TEST(VoxelToWorld, AnisotropicSpacingAndOrigin) {
    const auto w = voxel_to_world({1, 1, 1}, geometry({3, 3, 3}, {0.5, 0.5, 2.0}, {5, 0, 0}));
    EXPECT_EQ(w, (Vec3{5.5, 0.5, 2.0}));
}

TEST(VoxelToWorld, OutOfBoundsThrows) {
    const auto g = geometry({3, 3, 3});
    EXPECT_THROW((void)voxel_to_world({3, 0, 0}, g), BoundsError);
    EXPECT_THROW((void)voxel_to_world({0, -1, 0}, g), BoundsError);
}

TEST(VoxelToWorld, ExactlyAffine) {
    const auto g = geometry({20, 20, 20}, {0.7, 1.3, 2.5}, {-3.0, 4.0, 1.5});
    const Index3 b{3, 5, 2};
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::int64_t> u(0, 14);
    const auto base = voxel_to_world({0, 0, 0}, g);
    const auto step = voxel_to_world(b, g);
    for (int trial = 0; trial < 50; ++trial) {
        const Index3 a{u(rng), u(rng), u(rng)};
        const auto wa = voxel_to_world(a, g);
        const auto wab = voxel_to_world({a[0] + b[0], a[1] + b[1], a[2] + b[2]}, g);
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(wab[k] - wa[k], step[k] - base[k], 1e-12);
    }
}

TEST(GridInvariants, RejectsNonPositiveSpacing) {
    EXPECT_THROW(VoxelVolume::filled(geometry({2, 2, 2}, {1, -1, 1}), 0.0f), InvariantError);
    EXPECT_THROW(VoxelVolume::filled(geometry({2, 2, 2}, {1, 0, 1}), 0.0f), InvariantError);
}

TEST(GridInvariants, RejectsNonFiniteValues) {
    std::vector<float> data(8, 0.0f);
    data[3] = std::nanf("");
    EXPECT_THROW(VoxelVolume(geometry({2, 2, 2}), data), InvariantError);
}

TEST(GridInvariants, MaskRejectsNonBinary) {
    std::vector<std::uint8_t> data(8, 0);
    data[0] = 2;
    EXPECT_THROW(MaskVolume(geometry({2, 2, 2}), data), InvariantError);
}

TEST(GridInvariants, MaskMustMatchImage) {
    const auto img = VoxelVolume::filled(geometry({2, 2, 2}), 1.0f);
    const auto ok = MaskVolume::filled(geometry({2, 2, 2}), 0);
    const auto bad = MaskVolume::filled(geometry({2, 2, 2}, {1, 1, 2}), 0);
    EXPECT_NO_THROW(require_aligned(img, ok));
    EXPECT_THROW(require_aligned(img, bad), InvariantError);
}

TEST(PointCloudInvariants, CenteredFlagChecksCentroid) {
    EXPECT_NO_THROW(PointCloud({{1, 0, 0}, {-1, 0, 0}}, true));
    EXPECT_THROW(PointCloud({{1, 0, 0}, {0, 0, 0}}, true), InvariantError);
    EXPECT_THROW(PointCloud({{1, 0, std::nan("")}}), InvariantError);
}

TEST(TriangleMeshInvariants, RejectsBadFaces) {
    const std::vector<Vec3> v{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    EXPECT_NO_THROW(TriangleMesh(v, {{0, 1, 2}}));
    EXPECT_THROW(TriangleMesh(v, {{0, 1, 3}}), InvariantError);
    EXPECT_THROW(TriangleMesh(v, {{0, 1, 1}}), InvariantError);
}

TEST(TriangleMeshInvariants, TetrahedronTopology) {
    const TriangleMesh tet({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}});
    EXPECT_EQ(tet.edge_count(), 6u);
    EXPECT_EQ(tet.euler_characteristic(), 2);
    EXPECT_TRUE(tet.is_closed());
}

class VolumeRoundTrip : public ::testing::TestWithParam<std::string> {};

TEST_P(VolumeRoundTrip, ImageBitExact) {
    const auto dir = temp_dir("vol_" + GetParam().substr(1));
    const auto v = random_volume(42, {4, 4, 4}, {0.5, 0.75, 2.0}, {-10.25, 3.5, 7.0});
    const auto path = dir / ("v" + GetParam());
    io::save_volume(v, path);
    const auto back = io::load_image(path);
    EXPECT_TRUE(back.geometry().matches(v.geometry()));
    ASSERT_EQ(back.size(), v.size());
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(back[i], v[i]);
}

TEST_P(VolumeRoundTrip, MaskBitExact) {
    const auto dir = temp_dir("mask_" + GetParam().substr(1));
    const auto g = geometry({5, 3, 2}, {1, 2, 3}, {0.5, 0.5, 0.5});
    std::vector<std::uint8_t> data(g.voxel_count());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = (i * 7 % 3) == 0;
    const MaskVolume m(g, data);
    const auto path = dir / ("m" + GetParam());
    io::save_volume(m, path);
    const auto loaded = io::load_volume(path);
    ASSERT_TRUE(std::holds_alternative<MaskVolume>(loaded));
    const auto& back = std::get<MaskVolume>(loaded);
    EXPECT_TRUE(back.geometry().matches(g));
    for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(back[i], data[i]);
}

INSTANTIATE_TEST_SUITE_P(Formats, VolumeRoundTrip, ::testing::Values(".mha", ".mhd", ".raw"));

TEST(VolumeIo, NegativeSpacingIsParseError) {
    const auto dir = temp_dir("negspacing");
    const auto path = dir / "bad.mha";
    {
        std::ofstream out(path, std::ios::binary);
        out << "ObjectType = Image\nNDims = 3\nBinaryData = True\nBinaryDataByteOrderMSB = False\n"
               "ElementSpacing = 1 -1 1\nDimSize = 1 1 1\nElementType = MET_UCHAR\nElementDataFile = LOCAL\n";
        out.put('\0');
    }
    try {
        (void)io::load_volume(path);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("ElementSpacing"), std::string::npos);
    }
}

TEST(VolumeIo, SidecarNegativeSpacingNamesField) {
    const auto dir = temp_dir("negsidecar");
    {
        std::ofstream raw(dir / "v.raw", std::ios::binary);
        raw.put('\0');
        std::ofstream js(dir / "v.json");
        js << R"({"shape":[1,1,1],"spacing":[1,1,-2],"origin":[0,0,0],"dtype":"uint8"})";
    }
    try {
        (void)io::load_volume(dir / "v.raw");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("spacing"), std::string::npos);
    }
}

TEST(VolumeIo, RotatedDirectionRejected) {
    const auto dir = temp_dir("rotated");
    const auto path = dir / "rot.mha";
    {
        std::ofstream out(path, std::ios::binary);
        out << "ObjectType = Image\nNDims = 3\nBinaryData = True\nBinaryDataByteOrderMSB = False\n"
               "TransformMatrix = 0 1 0 1 0 0 0 0 1\nElementSpacing = 1 1 1\nDimSize = 1 1 1\n"
               "ElementType = MET_UCHAR\nElementDataFile = LOCAL\n";
        out.put('\0');
    }
    EXPECT_THROW((void)io::load_volume(path), ParseError);
}

TEST(VolumeIo, MaskWithValueTwoRejectedBeforeWrite) {
    const auto dir = temp_dir("mask2");
    const auto path = dir / "m.mha";
    std::vector<std::uint8_t> data(8, 0);
    data[5] = 2;
    EXPECT_THROW(
        {
            const MaskVolume m(geometry({2, 2, 2}), data);
            io::save_volume(m, path);
        },
        InvariantError);
    EXPECT_FALSE(fs::exists(path));
}

class CloudRoundTrip : public ::testing::TestWithParam<std::string> {};

TEST_P(CloudRoundTrip, PreservesPointsAndOrder) {
    const auto dir = temp_dir("cloud_" + GetParam().substr(1));
    const bool binary = GetParam() == ".pcu";
    // float32-representable values so the binary format is exact too.
    const PointCloud c({{1.5, -2.25, 3.0}, {0.1f, 1e-3f, -7.75}, {100.0, 0.0, -0.5}});
    const auto path = dir / ("c" + GetParam());
    io::save_cloud(c, path);
    const auto back = io::load_cloud(path);
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        for (int a = 0; a < 3; ++a) {
            if (binary) {
                EXPECT_EQ(back[i][a], static_cast<double>(static_cast<float>(c[i][a])));
            } else {
                EXPECT_EQ(back[i][a], c[i][a]);
            }
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Formats, CloudRoundTrip, ::testing::Values(".xyz", ".txt", ".pcu"));

TEST(CloudIo, TextRoundTripIsExactForArbitraryDoubles) {
    const auto dir = temp_dir("cloud_exact");
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-50, 50);
    std::vector<Vec3> pts(100);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    io::save_cloud(PointCloud(pts), dir / "c.xyz");
    const auto back = io::load_cloud(dir / "c.xyz");
    ASSERT_EQ(back.size(), pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(back[i], pts[i]);
}

TEST(CloudIo, EmptyFileIsError) {
    const auto dir = temp_dir("cloud_empty");
    { std::ofstream out(dir / "e.xyz"); }
    try {
        (void)io::load_cloud(dir / "e.xyz");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("cloud must contain >= 1 point"), std::string::npos);
    }
}

TEST(CloudIo, NanCoordinateIsParseError) {
    const auto dir = temp_dir("cloud_nan");
    {
        std::ofstream out(dir / "n.xyz");
        out << "1 2 3\n4 nan 6\n";
    }
    EXPECT_THROW((void)io::load_cloud(dir / "n.xyz"), ParseError);
}

TEST(MeshIo, ObjRoundTrip) {
    const auto dir = temp_dir("mesh");
    const TriangleMesh tet({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1.25}},
                           {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}});
    io::save_mesh_obj(tet, dir / "t.obj");
    const auto back = io::load_mesh_obj(dir / "t.obj");
    EXPECT_EQ(back.vertices(), tet.vertices());
    EXPECT_EQ(back.faces(), tet.faces());
}
