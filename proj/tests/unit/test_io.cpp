#include <doctest.h>

#include <filesystem>
#include <sstream>
#include <string>

#include <unistd.h>

#include "ddpc/error.hpp"
#include "ddpc/io.hpp"

using namespace ddpc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / fs::path("ddpc_test_io_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::size_t count_lines(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

} // namespace

TEST_CASE("trajectory csv round trip is exact") {
    TempDir tmp;
    const Trajectory u = white_excitation(2, 57, 0.0025, 0.1, 9);
    const Trajectory y = white_excitation(3, 57, 1.0, 4.0, 10);
    write_trajectory_csv(tmp.file("nested/traj.csv"), u, y);
    const auto [u2, y2] = read_trajectory_csv(tmp.file("nested/traj.csv"));
    CHECK(u2.data() == u.data());
    CHECK(y2.data() == y.data());
    CHECK(u2.sample_period() == doctest::Approx(u.sample_period()));

    const std::string text = trajectory_csv(u, y);
    CHECK(text.rfind("t_s,u1,u2,y1,y2,y3\n", 0) == 0);
    CHECK(count_lines(text) == 58);
}

TEST_CASE("trajectory csv errors") {
    TempDir tmp;
    CHECK_THROWS_AS(read_trajectory_csv(tmp.file("missing.csv")), IoError);
    write_text_file(tmp.file("bad.csv"), "t_s,u1,y1\n0,1,2\n0.02,1\n");
    CHECK_THROWS_AS(read_trajectory_csv(tmp.file("bad.csv")), IoError);
    write_text_file(tmp.file("nan.csv"), "t_s,u1,y1\n0,1,x\n");
    CHECK_THROWS_AS(read_trajectory_csv(tmp.file("nan.csv")), IoError);
    write_text_file(tmp.file("gap.csv"), "t_s,u1,y2\n0,1,2\n");
    CHECK_THROWS_AS(read_trajectory_csv(tmp.file("gap.csv")), IoError);
    CHECK_THROWS_AS(trajectory_csv(Trajectory::zeros(1, 3), Trajectory::zeros(1, 4)), DimensionError);
}

TEST_CASE("plant spec round trip") {
    TempDir tmp;
    const PlantSpec spec = benchmark_plant_spec(-0.002, 13);
    save_plant_spec(tmp.file("plant.ini"), spec);
    const PlantSpec back = load_plant_spec(tmp.file("plant.ini"));
    REQUIRE(back.modes.size() == spec.modes.size());
    CHECK(back.seed == spec.seed);
    CHECK(back.saturation_limit == spec.saturation_limit);
    CHECK(back.sample_period == spec.sample_period);
    for (std::size_t k = 0; k < spec.modes.size(); ++k) {
        CHECK(back.modes[k].freq_hz == spec.modes[k].freq_hz);
        CHECK(back.modes[k].damping_ratio == spec.modes[k].damping_ratio);
        CHECK(back.modes[k].input_residues == spec.modes[k].input_residues);
        CHECK(back.modes[k].output_residues == spec.modes[k].output_residues);
        CHECK(back.modes[k].disturbance_residues == spec.modes[k].disturbance_residues);
    }
    CHECK(build_plant(back).A == build_plant(spec).A);
    CHECK(plant_spec_ini(back) == plant_spec_ini(spec));

    PlantSpec nosat = spec;
    nosat.saturation_limit.reset();
    save_plant_spec(tmp.file("nosat.ini"), nosat);
    CHECK_FALSE(load_plant_spec(tmp.file("nosat.ini")).saturation_limit.has_value());

    write_text_file(tmp.file("empty.ini"), "[plant]\nsample_period = 0.02\nmodes = 0\n");
    CHECK_THROWS_AS(load_plant_spec(tmp.file("empty.ini")), Error);
}

TEST_CASE("models round trip") {
    TempDir tmp;
    ExcitationConfig ex;
    ex.n_samples = 400;
    ex.noise_std = 0.01;
    const TrainedModels m = excite_and_fit(build_plant(benchmark_plant_spec()), ex, {{8, 12, 400}, {8, 12, 150}});
    save_models(tmp.file("models.json"), m);
    const TrainedModels b = load_models(tmp.file("models.json"));
    CHECK(b.tpc.H_p == m.tpc.H_p);
    CHECK(b.tpc.H_u == m.tpc.H_u);
    CHECK(b.arx.H_p == m.arx.H_p);
    CHECK(b.arx.phi == m.arx.phi);
    CHECK(b.deepc.U_p.values == m.deepc.U_p.values);
    CHECK(b.deepc.Y_f.values == m.deepc.Y_f.values);
    CHECK(b.deepc.config.tau_p == 8);
    CHECK(b.tpc.config.n_samples == 400);
    CHECK_FALSE(b.data.has_value());

    write_text_file(tmp.file("other.json"), R"({"format": "something", "version": 1})");
    CHECK_THROWS_AS(load_models(tmp.file("other.json")), IoError);
    write_text_file(tmp.file("broken.json"), "{");
    CHECK_THROWS_AS(load_models(tmp.file("broken.json")), IoError);
}

TEST_CASE("episode and linearity csv layout") {
    EpisodeLog log;
    log.t = Eigen::Vector2d(0.0, 0.02);
    log.y = Eigen::MatrixXd::Constant(3, 2, 0.5);
    log.y_filt = Eigen::MatrixXd::Zero(3, 2);
    log.u = Eigen::MatrixXd::Constant(3, 2, -0.1);
    log.solve_ms = Eigen::Vector2d(0.0, 1.5);
    log.iterations = Eigen::Vector2i(0, 12);
    log.status = {"bootstrap", "Solved"};
    const std::string csv = episode_csv(log);
    std::istringstream in(csv);
    std::string header, row;
    std::getline(in, header);
    CHECK(header == "t_s,y1,y2,y3,yf1,yf2,yf3,u1,u2,u3,solve_ms,iters,status");
    std::getline(in, row);
    std::getline(in, row);
    CHECK(row.find(",-0.1,") != std::string::npos);
    CHECK(row.substr(row.size() - 10) == ",12,Solved");
    CHECK(count_lines(csv) == 3);

    LinearityReport r;
    r.scales = {1.0, 5.0};
    r.combos = {{0}, {0, 2}};
    r.rmse = {{Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()}, {Eigen::Vector3d::Ones(), Eigen::Vector3d::Ones()}};
    const std::string lin = linearity_csv(r);
    CHECK(lin.rfind("combo,scale,rmse_y1,rmse_y2,rmse_y3\n", 0) == 0);
    CHECK(count_lines(lin) == 5);
    CHECK(lin.find(combo_label({0, 2})) != std::string::npos);
}
