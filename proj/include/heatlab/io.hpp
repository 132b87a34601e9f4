#pragma once

#include "heatlab/core.hpp"
#include "heatlab/dynamics.hpp"
#include "heatlab/field.hpp"

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace heatlab {

struct TrajectoryRecord;

/// Provenance line written as the first line of every CSV: "# key=value; key=value".
struct FileHeader {
  std::map<std::string, std::string> entries;

  std::string get(const std::string& key) const;
  std::string format() const;
  static FileHeader parse(std::string_view line);
};

/// 64-bit FNV-1a of the resolved configuration text, as 16 hex digits.
std::string config_digest(std::string_view resolved_config);

/// Throws ValidationError when the header names a different process than `expected`.
void require_matching_model(const FileHeader& header, const std::string& expected, const std::string& path);

/// "%.17g" formatting used by every writer.
std::string format_double(double v);

void write_state_csv(const std::string& path, const EnergyState& state, const FileHeader& header = {});
EnergyState read_state_csv(const std::string& path, FileHeader* header = nullptr);

void write_trajectory_csv(const std::string& path, const TrajectoryRecord& record, const FileHeader& header = {});
/// Reads snapshots and times; occupation integrals are not part of the format.
TrajectoryRecord read_trajectory_csv(const std::string& path, FileHeader* header = nullptr);

/// Space-time field as `t,x,<column>` rows, time-major.
void write_field_csv(const std::string& path, const SpaceTimeField& field, const std::string& column,
                     const FileHeader& header = {});

struct FieldData {
  SpaceTimeGrid grid;
  FieldMatrix values;
  std::string column;
  FileHeader header;
};
FieldData read_field_csv(const std::string& path);

/// Binary noise log: magic "HLNOISE1", u32 kind, u32 reserved, u64 n_sites, u64 count,
/// then `count` packed little-endian records [u32 bond | f64 t | f64 value].
void write_noise_log(const std::string& path, const BondNoiseLog& log);
BondNoiseLog read_noise_log(const std::string& path);

void write_text(const std::string& path, const std::string& text);

}  // namespace heatlab
