#pragma once

#include "nodal/descending_flow.hpp"
#include "nodal/mesh_space.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>

namespace nodal {

/// Writes the artifacts of one run into a directory. JSON documents get a
/// "config_hash" member and CSV files a leading "# config_hash=" comment.
class ArtifactWriter {
public:
    ArtifactWriter(std::filesystem::path directory, std::string config_hash);

    const std::filesystem::path& directory() const { return dir_; }
    const std::string& config_hash() const { return hash_; }
    std::filesystem::path path(const std::string& name) const { return dir_ / name; }

    void write_json(const std::string& name, nlohmann::json document) const;
    void write_field(const std::string& name, const DiscreteSpace& space, const Field& u) const;
    void write_trajectory(const std::string& name, const Trajectory& traj) const;
    void write_text(const std::string& name, const std::string& text) const;

    /// Appends a timestamped line to run.log.
    void log(const std::string& message);

private:
    std::ofstream open(const std::string& name) const;

    std::filesystem::path dir_;
    std::string hash_;
    std::ofstream log_;
};

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace nodal
