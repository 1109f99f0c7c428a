#include "nodal/artifacts.hpp"

#include <chrono>
#include <ctime>
#include <iomanip>
#include <stdexcept>

namespace nodal {

ArtifactWriter::ArtifactWriter(std::filesystem::path directory, std::string config_hash)
    : dir_(std::move(directory)), hash_(std::move(config_hash)) {
    std::filesystem::create_directories(dir_);
    log_.open(dir_ / "run.log", std::ios::app);
    if (!log_) {
        throw std::runtime_error("cannot open " + (dir_ / "run.log").string());
    }
}

std::ofstream ArtifactWriter::open(const std::string& name) const {
    std::ofstream out(dir_ / name);
    if (!out) {
        throw std::runtime_error("cannot write " + (dir_ / name).string());
    }
    return out;
}

void ArtifactWriter::write_json(const std::string& name, nlohmann::json document) const {
    document["config_hash"] = hash_;
    auto out = open(name);
    out << document.dump(2) << '\n';
}

void ArtifactWriter::write_field(const std::string& name, const DiscreteSpace& space, const Field& u) const {
    auto out = open(name);
    write_field_csv(out, space, u, "config_hash=" + hash_);
}

void ArtifactWriter::write_trajectory(const std::string& name, const Trajectory& traj) const {
    auto out = open(name);
    write_trajectory_csv(out, traj, "config_hash=" + hash_);
}

void ArtifactWriter::write_text(const std::string& name, const std::string& text) const {
    auto out = open(name);
    out << text;
}

void ArtifactWriter::log(const std::string& message) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    log_ << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ") << " [" << hash_.substr(0, 12) << "] " << message << '\n';
    log_.flush();
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return nlohmann::json::parse(in);
}

}  // namespace nodal
