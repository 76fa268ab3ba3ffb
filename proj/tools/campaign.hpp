#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ddpc/loop.hpp"
#include "ddpc/plant.hpp"

namespace ddpc::cli {

struct ScenarioSpec {
    std::string name = "impulse";
    DisturbanceKind kind = DisturbanceKind::Impulse;
    std::optional<double> magnitude; // empty: calibrated first swing
    double first_swing = 0.05;       // pu on y2 of the stable counterpart
    double at = 5.0;
    double noise_std = 0.0;
};

struct BenchSpec {
    std::vector<ControllerKind> controllers{ControllerKind::TPC, ControllerKind::DeePC};
    std::vector<Index> tau_f{20, 40, 60, 80};
    int repetitions = 200;
    int setup_repetitions = 5;
};

/// Default excitation, collected under the nominal 0.01 pu load noise.
inline ExcitationConfig nominal_excitation() {
    ExcitationConfig ex;
    ex.noise_std = 0.01;
    return ex;
}

struct CampaignConfig {
    std::string source; // config path, empty for defaults

    // [plant]
    std::string plant_spec_path; // empty: built-in benchmark
    double dominant_damping = 0.002;
    std::uint64_t plant_seed = 7;
    std::optional<bool> saturation; // empty: as in the plant spec file

    // [excitation]
    ExcitationConfig excitation = nominal_excitation();

    // [tpc] / [deepc]
    TrainingConfig training;
    ControllerSettings controllers;

    // [run]
    std::vector<ControllerKind> run_controllers{ControllerKind::TPC, ControllerKind::SingleARX, ControllerKind::DeePC,
                                                ControllerKind::Zero};
    std::vector<ScenarioSpec> scenarios{ScenarioSpec{}};
    std::vector<std::uint64_t> noise_seeds{11};
    double duration = 60.0;
    double divergence_threshold = 1e3;
    std::vector<ControllerKind> expect_divergence;

    // [linearity]
    LinearityConfig linearity;
    bool linearity_saturation = true;

    // [bench]
    BenchSpec bench;

    std::string out_dir = "out";
    int jobs = 1;
    bool record_timing = false; // solve times in episode logs (not byte-reproducible)
};

/// Reads an INI campaign file. Unknown sections or keys are rejected. Throws ConfigError / IoError.
CampaignConfig load_campaign(const std::string& path);

/// Plant spec for the campaign: the spec file if given, else the built-in benchmark.
PlantSpec campaign_plant_spec(const CampaignConfig& cfg);

std::vector<std::string> split_list(const std::string& s);

} // namespace ddpc::cli
