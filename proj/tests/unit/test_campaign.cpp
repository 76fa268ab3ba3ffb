#include <doctest.h>

#include <filesystem>
#include <string>

#include <unistd.h>

#include "campaign.hpp"
#include "ddpc/error.hpp"
#include "ddpc/io.hpp"

using namespace ddpc;
using namespace ddpc::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / fs::path("ddpc_test_campaign_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string write(const std::string& name, const std::string& text) const {
        const std::string p = (path / name).string();
        write_text_file(p, text);
        return p;
    }
};

} // namespace

TEST_CASE("shipped campaign") {
    const CampaignConfig c = load_campaign(std::string(DDPC_DATA_DIR) + "/campaign.ini");
    CHECK(fs::path(c.plant_spec_path).filename() == "benchmark_plant_unstable.ini");
    CHECK(fs::exists(c.plant_spec_path));
    CHECK(c.training.tpc.tau_p == 30);
    CHECK(c.training.tpc.tau_f == 60);
    CHECK(c.training.deepc.n_samples == 500);
    CHECK(c.controllers.deepc_weights.Q_bar(0, 0) == 1e8);
    CHECK(c.controllers.deepc_weights.R_bar(1, 1) == 1.0);
    CHECK(c.controllers.deepc_weights.lambda_sigma == 1e5);
    CHECK(c.controllers.tpc_weights.Q_norm(1) == 0.04);
    CHECK(c.run_controllers.size() == 4);
    CHECK(c.expect_divergence == std::vector<ControllerKind>{ControllerKind::Zero});
    REQUIRE(c.scenarios.size() == 1);
    CHECK_FALSE(c.scenarios[0].magnitude.has_value());
    CHECK(c.linearity.combos.size() == 7);
    CHECK(c.linearity.combos.back() == std::vector<Index>{0, 1, 2});
    CHECK(c.bench.tau_f == std::vector<Index>{20, 40, 60, 80});

    const PlantSpec spec = campaign_plant_spec(c);
    CHECK(spec.modes.front().damping_ratio == doctest::Approx(-0.002));
}

TEST_CASE("defaults without a config") {
    const CampaignConfig c;
    CHECK(c.excitation.noise_std == 0.01);
    const PlantSpec spec = campaign_plant_spec(c);
    CHECK(spec.modes.size() == 4);
    CHECK(spec.modes.front().damping_ratio == doctest::Approx(0.002));
}

TEST_CASE("overrides and relative paths") {
    TempDir tmp;
    save_plant_spec((tmp.path / "plants" / "p.ini").string(), benchmark_plant_spec());
    const std::string p = tmp.write("c.ini", "[plant]\nspec = plants/p.ini\nsaturation = false\n"
                                             "[run]\ncontrollers = TPC, closed-form-tpc\nscenarios = step, bump\n"
                                             "noise_seeds = 1, 2, 3\n"
                                             "[scenario.bump]\nkind = ramp\nmagnitude = 0.25\nat = 2\n"
                                             "[bounds]\nu_limit = 0.2\ny_limit = 1\n");
    const CampaignConfig c = load_campaign(p);
    CHECK(fs::equivalent(c.plant_spec_path, tmp.path / "plants" / "p.ini"));
    CHECK_FALSE(campaign_plant_spec(c).saturation_limit.has_value());
    CHECK(c.run_controllers == std::vector<ControllerKind>{ControllerKind::TPC, ControllerKind::ClosedFormTPC});
    REQUIRE(c.scenarios.size() == 2);
    CHECK(c.scenarios[0].kind == DisturbanceKind::Step);
    CHECK(c.scenarios[1].kind == DisturbanceKind::Ramp);
    CHECK(*c.scenarios[1].magnitude == 0.25);
    CHECK(c.noise_seeds.size() == 3);
    CHECK(c.controllers.bounds.u_ub(2) == 0.2);
    CHECK(c.controllers.bounds.y_lb(0) == -1.0);
}

TEST_CASE("config errors") {
    TempDir tmp;
    CHECK_THROWS_AS(load_campaign(tmp.write("a.ini", "[plnat]\nseed = 1\n")), ConfigError);
    CHECK_THROWS_AS(load_campaign(tmp.write("b.ini", "[tpc]\ntau_q = 3\n")), ConfigError);
    CHECK_THROWS_AS(load_campaign(tmp.write("c.ini", "[tpc]\ntau_p = three\n")), ConfigError);
    CHECK_THROWS_AS(load_campaign(tmp.write("d.ini", "[run]\ncontrollers = pid\n")), ConfigError);
    CHECK_THROWS_AS(load_campaign(tmp.write("e.ini", "[run]\nscenarios = nowhere\n")), ConfigError);
    CHECK_THROWS_AS(load_campaign(tmp.write("f.ini", "[run]\nduration = 0\n")), ConfigError);
    CHECK_THROWS_AS(load_campaign(tmp.write("g.ini", "[plant]\nspec = missing.ini\n")), ConfigError);
    CHECK_THROWS_AS(load_campaign(tmp.write("h.ini", "[deepc]\nr_bar = 1, 0, 1\n")), ConfigError);
    CHECK_THROWS_AS(load_campaign(tmp.write("i.ini", "[scenario.x]\nkind = wobble\n")), ConfigError);
    CHECK_THROWS_AS(load_campaign((tmp.path / "none.ini").string()), IoError);
}

TEST_CASE("list splitting") {
    CHECK(split_list(" a, b ,,c ") == std::vector<std::string>{"a", "b", "c"});
    CHECK(split_list("").empty());
}
