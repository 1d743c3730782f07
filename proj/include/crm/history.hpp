#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "crm/error.hpp"
#include "crm/model.hpp"

namespace crm {

struct PatientRecord {
  DoseIndex dose = 0;
  int toxicity = 0;                // y
  std::optional<int> group;        // z
  std::optional<int> grade;        // 0..4
  std::optional<int> response;     // v, meaningful when toxicity == 0

  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

inline void validate_record(const PatientRecord& r, std::size_t dose_count) {
  if (r.dose >= dose_count)
    throw Error(ErrorCode::DoseOutOfRange, "record dose " + std::to_string(r.dose + 1) + " outside 1.." + std::to_string(dose_count));
  if (r.toxicity != 0 && r.toxicity != 1) throw Error(ErrorCode::InvalidHistory, "toxicity must be 0 or 1");
  if (r.group && *r.group != 0 && *r.group != 1) throw Error(ErrorCode::InvalidHistory, "group must be 0 or 1");
  if (r.grade && (*r.grade < 0 || *r.grade > 4)) throw Error(ErrorCode::InvalidHistory, "grade must lie in 0..4");
  if (r.grade && ((*r.grade == 4) != (r.toxicity == 1)))
    throw Error(ErrorCode::InvalidHistory, "grade 4 and toxicity must agree");
  if (r.response && *r.response != 0 && *r.response != 1) throw Error(ErrorCode::InvalidHistory, "response must be 0 or 1");
}

/// The accumulated trial data, in inclusion order.
class TrialHistory {
 public:
  TrialHistory() = default;
  explicit TrialHistory(std::vector<PatientRecord> records) : records_(std::move(records)) {}

  void add(PatientRecord r) { records_.push_back(std::move(r)); }

  const std::vector<PatientRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const PatientRecord& operator[](std::size_t j) const { return records_.at(j); }
  const PatientRecord& back() const { return records_.back(); }

  std::size_t toxicities() const noexcept {
    std::size_t n = 0;
    for (const auto& r : records_) n += static_cast<std::size_t>(r.toxicity);
    return n;
  }

  /// At least one toxic and one non-toxic outcome.
  bool heterogeneous() const noexcept {
    const std::size_t t = toxicities();
    return t > 0 && t < records_.size();
  }

  std::optional<DoseIndex> highest_tried() const noexcept {
    std::optional<DoseIndex> out;
    for (const auto& r : records_)
      if (!out || r.dose > *out) out = r.dose;
    return out;
  }

  void validate(std::size_t dose_count) const {
    for (const auto& r : records_) validate_record(r, dose_count);
  }

  friend bool operator==(const TrialHistory&, const TrialHistory&) = default;

 private:
  std::vector<PatientRecord> records_;
};

/// Sufficient statistics of the one-parameter likelihood: per-dose patient
/// and event counts. Counts are real so that weighted pseudo-data and
/// expected responses fit the same shape.
struct DoseTally {
  std::vector<double> patients;
  std::vector<double> events;

  explicit DoseTally(std::size_t dose_count = 0) : patients(dose_count, 0.0), events(dose_count, 0.0) {}

  std::size_t dose_count() const noexcept { return patients.size(); }

  double total() const noexcept {
    double s = 0.0;
    for (double n : patients) s += n;
    return s;
  }

  double total_events() const noexcept {
    double s = 0.0;
    for (double e : events) s += e;
    return s;
  }

  bool empty() const noexcept { return total() == 0.0; }

  bool heterogeneous() const noexcept {
    const double e = total_events();
    return e > 0.0 && e < total();
  }

  void add(DoseIndex dose, double event, double weight = 1.0) {
    patients.at(dose) += weight;
    events.at(dose) += weight * event;
  }
};

/// Toxicity tally, optionally under a group-shift member (group 1 records
/// move up group_shift levels, saturating at the top dose).
inline DoseTally tally_toxicity(const TrialHistory& history, std::size_t dose_count, std::size_t group_shift = 0) {
  DoseTally t(dose_count);
  for (const auto& r : history.records()) {
    DoseIndex d = r.dose;
    if (group_shift > 0 && r.group.value_or(0) == 1) d = std::min(d + group_shift, dose_count - 1);
    t.add(d, r.toxicity);
  }
  return t;
}

/// Response tally over the non-toxic records.
inline DoseTally tally_response(const TrialHistory& history, std::size_t dose_count) {
  DoseTally t(dose_count);
  for (const auto& r : history.records()) {
    if (r.toxicity != 0) continue;
    if (!r.response) throw Error(ErrorCode::MissingData, "non-toxic record without a response outcome");
    t.add(r.dose, *r.response);
  }
  return t;
}

}  // namespace crm
