// SPDX-License-Identifier: Apache-2.0
#include "liftrefine/checkpoint.hpp"
#include "liftrefine/config.hpp"
#include "liftrefine/error.hpp"
#include "liftrefine/image_io.hpp"
#include "liftrefine/losses.hpp"
#include "liftrefine/ops.hpp"
#include "liftrefine/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace liftrefine;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "liftrefine_unit";
    fs::create_directories(dir);
    return dir / name;
}

} // namespace

// --- losses and metrics ----------------------------------------------------

TEST(Losses, PsnrOfKnownMse) {
    const Tensor a = Tensor::zeros({3, 4, 4});
    const Tensor b = Tensor::full({3, 4, 4}, 0.1);
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
    EXPECT_EQ(psnr(a, a), kPsnrCap);
}

TEST(Losses, SsimOfIdenticalImagesIsOne) {
    Rng rng(1);
    const Tensor img = rng.uniform_tensor({3, 16, 16}, 0.0, 1.0);
    EXPECT_NEAR(ssim(img, img), 1.0, 1e-12);
    EXPECT_LT(ssim(img, Tensor::full({3, 16, 16}, 0.5)), 0.5);
    EXPECT_THROW(ssim(Tensor::zeros({3, 8, 8}), Tensor::zeros({3, 8, 8})), ValueError);
}

TEST(Losses, GradientPyramidIgnoresConstantOffsets) {
    Rng rng(2);
    const Tensor img = rng.uniform_tensor({3, 16, 16}, 0.0, 1.0);
    EXPECT_NEAR(gradient_pyramid_loss(img, affine(img, 1.0, 0.3)).item(), 0.0, 1e-12);
    EXPECT_GT(gradient_pyramid_loss(img, Tensor::zeros({3, 16, 16})).item(), 0.0);
}

TEST(Losses, ReconLossWithoutPerceptualTermIsMse) {
    Rng rng(3);
    const Tensor a = rng.uniform_tensor({3, 8, 8}, 0.0, 1.0);
    const Tensor b = rng.uniform_tensor({3, 8, 8}, 0.0, 1.0);
    LossConfig off;
    off.perceptual_mode = PerceptualMode::off;
    EXPECT_NEAR(recon_loss(a, b, off).item(), mean(square(sub(a, b))).item(), 1e-15);
    LossConfig on;
    EXPECT_GT(recon_loss(a, b, on).item(), recon_loss(a, b, off).item());
}

TEST(Losses, MetricsReport) {
    std::ostringstream os;
    write_metrics_report(os, {{"a", 20.0, 0.5}, {"b", 30.0, 0.7}});
    const std::string text = os.str();
    EXPECT_NE(text.find("a\t20"), std::string::npos);
    EXPECT_NE(text.find("mean\t25"), std::string::npos);
}

// --- image files -----------------------------------------------------------

TEST(ImageIo, PfmRoundTripIsLossless) {
    Rng rng(4);
    const Tensor img = rng.uniform_tensor({3, 5, 7}, 0.0, 1.0);
    const fs::path p = temp_path("round.pfm");
    write_pfm(p, img);
    const Tensor back = read_pfm(p);
    ASSERT_EQ(back.shape(), img.shape());
    for (std::int64_t i = 0; i < img.numel(); ++i) {
        EXPECT_EQ(back.data()[i], static_cast<double>(static_cast<float>(img.data()[i])));
    }
}

TEST(ImageIo, PngIsWrittenAndBadPfmRejected) {
    const fs::path png = temp_path("img.png");
    write_png(png, Tensor::full({3, 4, 4}, 2.0));
    std::ifstream in(png, std::ios::binary);
    char sig[8];
    in.read(sig, 8);
    EXPECT_EQ(std::string(sig + 1, 3), "PNG");
    const fs::path bad = temp_path("bad.pfm");
    std::ofstream(bad) << "P6\n1 1\n255\n";
    EXPECT_THROW(read_pfm(bad), ValueError);
}

// --- checkpoints -----------------------------------------------------------

TEST(Checkpoint, EncodeDecodeRoundTrip) {
    Rng rng(5);
    const ParameterList in{{"a.weight", rng.normal_tensor({2, 3})}, {"b", Tensor::scalar(-1.5)}};
    const ParameterList out = decode_tensors(encode_tensors(in));
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].name, "a.weight");
    EXPECT_EQ(out[0].tensor.shape(), (Shape{2, 3}));
    for (std::int64_t i = 0; i < 6; ++i) EXPECT_EQ(out[0].tensor.data()[i], in[0].tensor.data()[i]);
    EXPECT_EQ(find_tensor(out, "b").item(), -1.5);
    EXPECT_THROW(find_tensor(out, "c"), ValueError);
}

TEST(Checkpoint, AssignChecksNamesAndShapes) {
    ParameterList target{{"w", Tensor::zeros({2})}};
    assign_tensors(target, {{"w", Tensor::from({2}, {1.0, 2.0})}});
    EXPECT_EQ(target[0].tensor.data()[1], 2.0);
    EXPECT_THROW(assign_tensors(target, {{"w", Tensor::zeros({3})}}), Error);
    EXPECT_THROW(assign_tensors(target, {{"v", Tensor::zeros({2})}}), Error);
}

TEST(Checkpoint, CorruptBytesAreRejected) {
    auto bytes = encode_tensors({{"x", Tensor::ones({4})}});
    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    EXPECT_THROW(decode_tensors(truncated), Error);
    bytes[0] = 'X';
    EXPECT_THROW(decode_tensors(bytes), Error);
}

// --- config ----------------------------------------------------------------

TEST(Config, ParsesCommentsAndTypes) {
    const Config c = Config::parse("# header\na = 3\n b=2.5 # trailing\nflag = true\nname = run one\n");
    EXPECT_EQ(c.get_int("a", 0), 3);
    EXPECT_DOUBLE_EQ(c.get_double("b", 0.0), 2.5);
    EXPECT_TRUE(c.get_bool("flag", false));
    EXPECT_EQ(c.get_string("name", ""), "run one");
    EXPECT_EQ(c.get_int("missing", 7), 7);
    EXPECT_THROW(c.get_int("b", 0), ValueError);
    EXPECT_THROW(Config::parse("no equals sign"), ValueError);
}

TEST(Config, SaveLoadRoundTripAndDefaults) {
    Config c;
    c.set("z", "1");
    c.set("a", "x");
    Config defaults;
    defaults.set("a", "ignored");
    defaults.set("m", "2");
    c.merge_defaults(defaults);
    EXPECT_EQ(c.to_string(), "a = x\nm = 2\nz = 1\n");
    const fs::path p = temp_path("cfg.txt");
    c.save(p);
    EXPECT_EQ(Config::load(p).to_string(), c.to_string());
}
