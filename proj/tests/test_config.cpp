#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nvmag/config.hpp"
#include "nvmag/error.hpp"
#include "nvmag/experiment.hpp"

using namespace nvmag;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("nvmag_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST(Quantity, UnitsConvertToSi) {
    EXPECT_DOUBLE_EQ(parse_quantity("2 kHz", Dim::frequency)[0], 2e3);
    EXPECT_DOUBLE_EQ(parse_quantity("1.5 MHz", Dim::frequency)[0], 1.5e6);
    EXPECT_DOUBLE_EQ(parse_quantity("25 G", Dim::field)[0], 25e-4);
    EXPECT_DOUBLE_EQ(parse_quantity("1 uT", Dim::field)[0], 1e-6);
    EXPECT_DOUBLE_EQ(parse_quantity("500 us", Dim::time)[0], 500e-6);
    EXPECT_DOUBLE_EQ(parse_quantity("100 mm3", Dim::volume)[0], 100e-9);
    EXPECT_DOUBLE_EQ(parse_quantity("-110 dBc/Hz", Dim::level)[0], -110.0);
    const auto v = parse_quantity("15, 25, 35 Hz", Dim::frequency);
    ASSERT_EQ(v.size(), 3u);
    EXPECT_DOUBLE_EQ(v[2], 35.0);
    EXPECT_DOUBLE_EQ(parse_quantity("1.2e13", Dim::none)[0], 1.2e13);
}

TEST(Quantity, BadInputsRejected) {
    EXPECT_THROW(parse_quantity("2", Dim::frequency), Error);
    EXPECT_THROW(parse_quantity("2 T", Dim::frequency), Error);
    EXPECT_THROW(parse_quantity("2 furlong", Dim::field), Error);
    EXPECT_THROW(parse_quantity("2kHz", Dim::frequency), Error);
    EXPECT_THROW(parse_quantity("abc Hz", Dim::frequency), Error);
    EXPECT_THROW(parse_quantity("3 Hz", Dim::none), Error);
    EXPECT_THROW(parse_quantity("1.5", Dim::count), Error);
}

TEST(Ini, DottedSectionsAndUnknownKeys) {
    auto ini = IniFile::parse("; comment\n[experiment]\nname = x\n[sensor.spins]\nkappa_s = 2 MHz\ntypo = 3\n");
    EXPECT_TRUE(ini.has("sensor.spins", "kappa_s"));
    EXPECT_DOUBLE_EQ(ini.number("sensor.spins", "kappa_s", Dim::frequency, 0.0), 2e6);
    EXPECT_EQ(ini.string("experiment", "name", ""), "x");
    EXPECT_THROW(ini.check_unused(), Error);
    EXPECT_DOUBLE_EQ(ini.number("sensor.spins", "typo", Dim::none, 0.0), 3.0);
    EXPECT_NO_THROW(ini.check_unused());
}

TEST(Ini, ErrorsNameTheKey) {
    auto ini = IniFile::parse("[sensor]\nbias_rms = 25\n", "demo.ini");
    try {
        ini.number("sensor", "bias_rms", Dim::field, 0.0);
        FAIL() << "missing unit accepted";
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("demo.ini"), std::string::npos);
        EXPECT_NE(msg.find("bias_rms"), std::string::npos);
    }
}

TEST(Ini, Sha256OfContent) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const std::string text = "[experiment]\nname = figS-response\n";
    EXPECT_EQ(IniFile::parse(text).sha256(), sha256_hex(text));
}

TEST(ExperimentConfig, DefaultsAndOverrides) {
    const auto cfg = config_from_ini(IniFile::parse("[experiment]\nname = figS-thermal\nseed = 9\n"
                                                    "[sensor.cavity]\nkappa_c0 = 100 kHz\n"
                                                    "[sensor.spins]\nkappa_s = 1.5 MHz\n"
                                                    "[noise.mw]\nlevel = -177 dBc/Hz\nband = 0, 1 MHz\n"));
    EXPECT_EQ(cfg.name, "figS-thermal");
    EXPECT_EQ(cfg.seed, 9u);
    EXPECT_DOUBLE_EQ(cfg.sample_rate, 2e6);
    EXPECT_DOUBLE_EQ(cfg.sensor.kappa_c0, kTwoPi * 100e3);
    EXPECT_DOUBLE_EQ(cfg.sensor.kappa_s, kTwoPi * 1.5e6);
    EXPECT_TRUE(cfg.mw_noise.enabled());
    EXPECT_DOUBLE_EQ(cfg.mw_noise.level_dbc, -177.0);
    EXPECT_DOUBLE_EQ(cfg.mw_noise.f_hi, 1e6);
    EXPECT_FALSE(cfg.bias_amp_noise.enabled());
}

TEST(ExperimentConfig, ValidationFailures) {
    EXPECT_THROW(config_from_ini(IniFile::parse("[experiment]\nseed = 1\n")), Error);
    EXPECT_THROW(config_from_ini(IniFile::parse("[experiment]\nname = fig2-timeseries\n[run]\nduration = -1 s\n")), Error);
    EXPECT_THROW(config_from_ini(IniFile::parse("[experiment]\nname = fig2-timeseries\n[sweep]\nbandwidths = 0, 2 MHz\n")),
                 Error);
    EXPECT_THROW(config_from_ini(IniFile::parse("[experiment]\nname = fig2-timeseries\n[sensor]\nbias = 3 G\n")), Error);
    EXPECT_THROW(config_from_ini(IniFile::parse("[experiment]\nname = fig2-timeseries\n[noise.mw]\nkind = loud\n")), Error);
}

TEST(Experiments, ListAndUnknownName) {
    const auto names = experiment_names();
    EXPECT_EQ(names.size(), 7u);
    for (const auto& n : names) EXPECT_FALSE(experiment_description(n).empty());
    try {
        experiment_description("fig9");
        FAIL() << "unknown experiment accepted";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("fig3-vector"), std::string::npos);
    }
}

TEST(Experiments, ResponseRunWritesCsvAndSummary) {
    auto cfg = config_from_ini(IniFile::parse("[experiment]\nname = figS-response\n"));
    const auto dir = scratch("resp");
    cfg.output_dir = dir.string();
    const std::string summary = run_experiment(cfg);
    EXPECT_FALSE(summary.empty());
    EXPECT_TRUE(fs::exists(dir / "summary.txt"));
    EXPECT_TRUE(fs::exists(dir / "manifest.txt"));
    bool csv = false;
    for (const auto& e : fs::directory_iterator(dir)) csv = csv || e.path().extension() == ".csv";
    EXPECT_TRUE(csv);
    fs::remove_all(dir);
}

TEST(Experiments, TimeseriesRunsAreBitIdentical) {
    auto cfg = config_from_ini(IniFile::parse("[experiment]\nname = fig2-timeseries\nseed = 4\n"));
    const auto da = scratch("ts_a"), db = scratch("ts_b");
    cfg.output_dir = da.string();
    run_experiment(cfg);
    cfg.output_dir = db.string();
    run_experiment(cfg);
    std::size_t csvs = 0;
    for (const auto& e : fs::directory_iterator(da)) {
        const auto name = e.path().filename();
        ASSERT_TRUE(fs::exists(db / name)) << name;
        if (name == "manifest.txt") continue;
        EXPECT_EQ(slurp(e.path()), slurp(db / name)) << name;
        csvs += e.path().extension() == ".csv";
    }
    EXPECT_GE(csvs, 1u);
    const std::string manifest = slurp(da / "manifest.txt");
    for (const char* key : {"experiment = fig2-timeseries", "seed = 4", "config_sha256 = ", "nvmag = ", "ceres = ", "fftw = ",
                            "openssl = ", "output = "}) {
        EXPECT_NE(manifest.find(key), std::string::npos) << key;
    }
    fs::remove_all(da);
    fs::remove_all(db);
}

TEST(Experiments, NoiseRealizationFollowsSeed) {
    NoiseSettings n;
    n.level_dbc = -120.0;
    n.f_hi = 1e5;
    const auto a = realize_noise(n, 2e6, 0.01, 77);
    const auto b = realize_noise(n, 2e6, 0.01, 77);
    const auto c = realize_noise(n, 2e6, 0.01, 78);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
}
