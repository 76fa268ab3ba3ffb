#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ddpc/loop.hpp"
#include "ddpc/plant.hpp"
#include "ddpc/predictors.hpp"
#include "ddpc/signals.hpp"

namespace ddpc {

/// Writes `content` to `path`, creating parent directories. Throws IoError.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

/// Header `t_s,u1..um,y1..yp`; time with 6 decimals, values in shortest round-trip form.
std::string trajectory_csv(const Trajectory& u, const Trajectory& y);
void write_trajectory_csv(const std::string& path, const Trajectory& u, const Trajectory& y);
/// Columns are matched by name (u<k>, y<k>); the sample period is taken from t_s.
std::pair<Trajectory, Trajectory> read_trajectory_csv(const std::string& path);

/**
 * INI plant specification:
 *
 *   [plant]  sample_period, saturation_limit (number or "none"), seed, modes
 *   [mode1]  freq_hz, damping_ratio, input_residues, output_residues, disturbance_residues
 *
 * Residues are comma-separated lists.
 */
std::string plant_spec_ini(const PlantSpec& spec);
void save_plant_spec(const std::string& path, const PlantSpec& spec);
PlantSpec load_plant_spec(const std::string& path);

/// JSON model file holding the fitted TPC, Single-ARX and DeePC data (format "ddpc-models", version 1).
void save_models(const std::string& path, const TrainedModels& models);
TrainedModels load_models(const std::string& path);

/// Columns `t_s, y1..yp, yf1..yfp, u1..um, solve_ms, iters, status`.
std::string episode_csv(const EpisodeLog& log);
void write_episode_csv(const std::string& path, const EpisodeLog& log);

/// Columns `combo, scale, rmse_y1..rmse_yp`.
std::string linearity_csv(const LinearityReport& report);

} // namespace ddpc
