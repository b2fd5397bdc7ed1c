#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cloudfusion/cli.hpp"
#include "test_util.hpp"

using namespace cloudfusion;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "cloudfusion");
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("cloudfusion_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& rel) const { return (dir_ / rel).string(); }
    void write_text(const std::string& rel, const std::string& text) const { std::ofstream(dir_ / rel) << text; }
    static std::string slurp(const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    }

    fs::path dir_;
};

TEST(ParseArgs, EvalOptions) {
    auto cl = parse_args({"cloudfusion", "eval", "--pred", "a", "--target", "b"});
    EXPECT_EQ(cl.command, "eval");
    EXPECT_EQ(cl.options.get_string("pred", ""), "a");
    EXPECT_EQ(cl.options.get_string("target", ""), "b");
    EXPECT_EQ(cl.options.get_int("k", 0), 10);
}

TEST(ParseArgs, UnknownFlagIsUsageError) {
    auto r = run({"eval", "--frobnicate"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("--pred"), std::string::npos);
    auto named = run({"eval", "--pred", "a", "--target", "b", "--frobnicate"});
    EXPECT_EQ(named.code, 2);
    EXPECT_NE(named.err.find("frobnicate"), std::string::npos);
    EXPECT_EQ(run({"fly"}).code, 2);
    EXPECT_EQ(run({}).code, 2);
}

TEST(ParseArgs, HelpExitsZero) {
    auto r = run({"--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("simulate"), std::string::npos);
}

TEST_F(CliTest, CommandLineOverridesConfigFile) {
    write_text("train.cfg", "# toy run\nseed = 1\nmodel = toy\nn_iter=3\n");
    auto cl = parse_args({"cloudfusion", "train", "--config", path("train.cfg"), "--seed", "7", "--set", "n_iter=5"});
    EXPECT_EQ(cl.options.get_int("seed", -1), 7);
    auto cfg = train_config_from(cl.options);
    EXPECT_EQ(cfg.seed, 7u);
    EXPECT_EQ(cfg.schedule.n_iter, 5);
    EXPECT_EQ(cfg.model.ngf, ModelConfig::toy().ngf);
}

TEST_F(CliTest, ConfigErrorsAreReportedBeforeWork) {
    write_text("bad_key.cfg", "sed = 1\n");
    auto r = run({"train", "--config", path("bad_key.cfg")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("unknown key 'sed'"), std::string::npos);
    EXPECT_NE(r.err.find("paired_fraction"), std::string::npos);

    write_text("bad_value.cfg", "n_iter = many\n");
    r = run({"train", "--config", path("bad_value.cfg"), "--data", path("nowhere")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("n_iter"), std::string::npos);
}

TEST_F(CliTest, TrainWithMissingDataDirNamesThePath) {
    auto r = run({"train", "--data", path("missing_data")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find(path("missing_data")), std::string::npos);
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST_F(CliTest, StatsPrintsMomentsAndHistogram) {
    fs::create_directories(dir_ / "masks");
    write_raster(Raster(1, 4, 4, Modality::Mask, 0.0f), path("masks/a.sr12"));
    write_raster(Raster(1, 4, 4, Modality::Mask, 1.0f), path("masks/b.sr12"));
    auto r = run({"stats", "--masks", path("masks")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("mean=50.00% std=50.00%"), std::string::npos);
    EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 21);
}

TEST_F(CliTest, SimulateDefaultsSeedToZeroAndIsIdempotent) {
    write_raster(testutil::random_raster(3, 32, 32, 1), path("clear.sr12"));
    auto a = run({"simulate", "--mode", "perlin", "--cloudfree", path("clear.sr12"), "--out", path("a"), "--base-period",
                  "16", "--preview"});
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_NE(a.out.find("seed=0"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir_ / "a" / "cloudy.ppm"));
    auto b = run({"simulate", "--mode", "perlin", "--cloudfree", path("clear.sr12"), "--out", path("b"), "--base-period",
                  "16", "--seed", "0"});
    ASSERT_EQ(b.code, 0);
    EXPECT_EQ(slurp(path("a/cloudy.sr12")), slurp(path("b/cloudy.sr12")));
    EXPECT_EQ(slurp(path("a/mask.sr12")), slurp(path("b/mask.sr12")));
    EXPECT_EQ(run({"simulate", "--mode", "fog", "--cloudfree", path("clear.sr12"), "--out", path("c")}).code, 1);
}

TEST_F(CliTest, SimulateCopyModeUsesGivenMask) {
    write_raster(testutil::random_raster(3, 16, 16, 1), path("clear.sr12"));
    write_raster(testutil::random_raster(3, 16, 16, 2), path("cloudy.sr12"));
    write_raster(Raster(1, 16, 16, Modality::Mask, 0.0f), path("mask.sr12"));
    auto r = run({"simulate", "--mode", "copy", "--cloudfree", path("clear.sr12"), "--cloudy", path("cloudy.sr12"),
                  "--mask", path("mask.sr12"), "--out", path("o")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_raster(path("o/cloudy.sr12")).data, read_raster(path("clear.sr12")).data);
}

TEST_F(CliTest, MaskCommandWritesMapsAndPreviews) {
    Raster s2(13, 12, 12, Modality::S2, 500.0f);
    write_raster(s2, path("scene.sr12"));
    auto r = run({"mask", "--input", path("scene.sr12"), "--out", path("masks"), "--preview"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto m = read_raster(path("masks/scene.sr12"));
    EXPECT_EQ(m.bands, 1u);
    for (float v : m.data) EXPECT_EQ(v, 0.0f);
    EXPECT_TRUE(fs::exists(dir_ / "masks" / "scene.pgm"));
    write_raster(Raster(5, 4, 4), path("odd.sr12"));
    EXPECT_EQ(run({"mask", "--input", path("odd.sr12"), "--out", path("masks")}).code, 1);
}

TEST_F(CliTest, TileAndPreview) {
    write_raster(testutil::random_raster(3, 300, 300, 4), path("scene.sr12"));
    auto r = run({"tile", "--input", path("scene.sr12"), "--out", path("tiles"), "--size", "256"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 4);
    auto p = run({"preview", "--input", path("scene.sr12"), "--out", path("scene.ppm")});
    ASSERT_EQ(p.code, 0) << p.err;
    EXPECT_EQ(slurp(path("scene.ppm")).substr(0, 2), "P6");
}

TEST_F(CliTest, SynthTrainPredictEval) {
    auto s = run({"synth", "--out", path("data"), "--count", "4", "--size", "16"});
    ASSERT_EQ(s.code, 0) << s.err;
    EXPECT_NE(s.out.find("seed=0"), std::string::npos);
    auto t = run({"train", "--data", path("data"), "--out", path("run"), "--max-steps", "2", "--set", "model=toy",
                  "--set", "n_blocks=1", "--set", "crop=16", "--set", "n_iter=1", "--set", "n_decay=1"});
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_NE(t.out.find("steps=2"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir_ / "run" / "losses.csv"));
    ASSERT_TRUE(fs::exists(dir_ / "run" / "epoch_1.cfw1"));

    write_text("toy.cfg", "model = toy\nn_blocks = 1\n");
    auto p = run({"predict", "--checkpoint", path("run/epoch_1.cfw1"), "--data", path("data"), "--out", path("pred"),
                  "--config", path("toy.cfg")});
    ASSERT_EQ(p.code, 0) << p.err;
    EXPECT_EQ(std::count(p.out.begin(), p.out.end(), '\n'), 4);

    auto self = run({"eval", "--pred", path("data/s2_cloudfree"), "--target", path("data/s2_cloudfree")});
    ASSERT_EQ(self.code, 0) << self.err;
    EXPECT_NE(self.out.find("0.000000,0.000000,inf,1.000000,0.000000"), std::string::npos);
    auto e = run({"eval", "--pred", path("pred"), "--target", path("data/s2_cloudfree"), "--k", "2"});
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_NE(e.out.find("precision"), std::string::npos);
    EXPECT_NE(e.out.find("MAE,RMSE,PSNR,SSIM,SAM,precision,recall,F1"), std::string::npos);
}

TEST_F(CliTest, EvalReadsExternalEmbeddings) {
    fs::create_directories(dir_ / "p");
    fs::create_directories(dir_ / "t");
    for (int i = 0; i < 3; ++i) {
        const std::string name = "/" + std::to_string(i) + ".sr12";
        write_raster(testutil::random_raster(3, 16, 16, 10 + i), path("p") + name);
        write_raster(testutil::random_raster(3, 16, 16, 20 + i), path("t") + name);
    }
    EmbeddingFile ef;
    ef.n = 6;
    ef.d = 2;
    ef.values = {0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0, 1};
    write_embeddings(ef, path("emb.cfe1"));
    auto r = run({"eval", "--pred", path("p"), "--target", path("t"), "--embeddings", path("emb.cfe1"), "--k", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find(",1.000000,1.000000,1.000000\n"), std::string::npos);
    ef.n = 4;
    ef.values.resize(8);
    write_embeddings(ef, path("short.cfe1"));
    EXPECT_EQ(run({"eval", "--pred", path("p"), "--target", path("t"), "--embeddings", path("short.cfe1")}).code, 1);
}

TEST(ConfigTest, ParsingRules) {
    auto c = Config::parse("a = 1 # trailing\n\n  b=x y  \n", {"a", "b"});
    EXPECT_EQ(c.get_int("a", 0), 1);
    EXPECT_EQ(c.get_string("b", ""), "x y");
    EXPECT_THROW(Config::parse("novalue\n", {"a"}), ParameterError);
    EXPECT_THROW(Config::parse("c=1\n", {"a"}), ParameterError);
    EXPECT_THROW(Config::parse("a=1.5\n", {"a"}).get_int("a", 0), ParameterError);
    EXPECT_THROW(Config::parse("a=maybe\n", {"a"}).get_bool("a", false), ParameterError);
    EXPECT_THROW(Config::load("/nonexistent/cfg", {"a"}), IoError);
}

}  // namespace
