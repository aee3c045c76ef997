#include "tscac/dataset_io.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string_view>

#include "tscac/errors.hpp"
#include "tscac/text.hpp"

namespace tscac {

namespace {

constexpr std::string_view kMagic = "# tscac-dataset 1";

struct ParsedLine {
  std::string session;
  std::size_t t = 0;
  std::vector<double> features;
  std::optional<std::size_t> action_index;
  std::optional<double> behavior_prob;
  std::vector<double> response;
  bool done = false;
};

[[noreturn]] void fail(std::size_t line_no, const std::string& msg) {
  throw IoError("dataset line " + std::to_string(line_no) + ": " + msg);
}

ParsedLine parse_line(const std::string& line, std::size_t line_no) {
  const auto fields = split(line, '\t');
  if (fields.size() != 7) {
    fail(line_no, "expected 7 tab-separated fields, got " + std::to_string(fields.size()));
  }
  ParsedLine p;
  try {
    p.session = std::string(fields[0]);
    if (p.session.empty()) fail(line_no, "empty session id");
    p.t = parse_size(fields[1]);
    p.features = fields[2].empty() ? std::vector<double>{} : parse_doubles(fields[2], ',');
    if (fields[3] != "-") p.action_index = parse_size(fields[3]);
    if (fields[4] != "-") {
      p.behavior_prob = parse_double(fields[4]);
      if (!(*p.behavior_prob > 0.0 && *p.behavior_prob <= 1.0)) {
        fail(line_no, "behavior_prob outside (0, 1]");
      }
    }
    p.response = parse_doubles(fields[5], ',');
    if (fields[6] == "1") {
      p.done = true;
    } else if (fields[6] != "0") {
      fail(line_no, "done flag must be 0 or 1");
    }
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    fail(line_no, e.what());
  }
  return p;
}

}  // namespace

void write_dataset(const ReplayDataset& dataset, std::ostream& os) {
  os << kMagic << "\n";
  os << "# m = " << dataset.m << "\n";
  for (const auto& [k, v] : dataset.metadata) {
    if (k == "m") continue;
    os << "# " << k << " = " << v << "\n";
  }
  for (const auto& traj : dataset.trajectories) {
    for (std::size_t t = 0; t < traj.transitions.size(); ++t) {
      const auto& tr = traj.transitions[t];
      os << traj.session_id << '\t' << t << '\t' << join_doubles(tr.state.features, ',') << '\t';
      if (tr.action_index) {
        os << *tr.action_index;
      } else {
        os << '-';
      }
      os << '\t';
      if (tr.behavior_prob) {
        os << format_double(*tr.behavior_prob);
      } else {
        os << '-';
      }
      os << '\t' << join_doubles(tr.response.values, ',') << '\t' << (tr.done ? '1' : '0')
         << '\n';
    }
  }
}

void write_dataset(const ReplayDataset& dataset, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  write_dataset(dataset, os);
  if (!os) throw IoError("write to '" + path.string() + "' failed");
}

ReplayDataset read_dataset(std::istream& is) {
  ReplayDataset ds;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::optional<std::size_t> declared_m;
  std::vector<std::pair<ParsedLine, std::size_t>> rows;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line == kMagic) {
        header_seen = true;
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail(line_no, "metadata line without '='");
      const std::string key{trim(std::string_view(line).substr(1, eq - 1))};
      const std::string value{trim(std::string_view(line).substr(eq + 1))};
      if (key == "m") {
        try {
          declared_m = parse_size(value);
        } catch (const std::exception& e) {
          fail(line_no, e.what());
        }
      } else {
        ds.metadata[key] = value;
      }
      continue;
    }
    if (!header_seen) fail(line_no, "missing '" + std::string(kMagic) + "' header");
    rows.emplace_back(parse_line(line, line_no), line_no);
  }

  std::optional<std::size_t> n_items;
  if (auto it = ds.metadata.find("n_items"); it != ds.metadata.end()) {
    n_items = parse_size(it->second);
  } else {
    std::size_t mx = 0;
    bool any = false;
    for (const auto& [p, _] : rows) {
      if (p.action_index) {
        mx = std::max(mx, *p.action_index);
        any = true;
      }
    }
    if (any) n_items = mx + 1;
  }

  std::set<std::string> finished;
  std::optional<std::size_t> dim;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& [p, ln] = rows[r];
    if (!declared_m) declared_m = p.response.size();
    if (p.response.size() != *declared_m) {
      fail(ln, "expected " + std::to_string(*declared_m) + " responses, got " +
                   std::to_string(p.response.size()));
    }
    if (!dim) dim = p.features.size();
    if (p.features.size() != *dim) fail(ln, "inconsistent state dimension");

    const bool new_session = ds.trajectories.empty() ||
                             ds.trajectories.back().session_id != p.session;
    if (new_session) {
      if (!ds.trajectories.empty() && !ds.trajectories.back().transitions.back().done) {
        fail(ln, "session '" + ds.trajectories.back().session_id + "' ends without done=1");
      }
      if (finished.count(p.session)) fail(ln, "session '" + p.session + "' is not contiguous");
      finished.insert(p.session);
      ds.trajectories.push_back(Trajectory{p.session, {}});
    } else if (ds.trajectories.back().transitions.back().done) {
      fail(ln, "session '" + p.session + "' continues after done=1");
    }
    auto& traj = ds.trajectories.back();
    if (p.t != traj.transitions.size()) {
      fail(ln, "expected t=" + std::to_string(traj.transitions.size()) + ", got " +
                   std::to_string(p.t));
    }
    Transition tr;
    tr.state = StateVec{p.features, false};
    if (p.action_index) {
      if (*p.action_index >= *n_items) fail(ln, "action_index out of range");
      tr.action = ActionEmbed::one_hot(*n_items, *p.action_index);
    }
    tr.action_index = p.action_index;
    tr.behavior_prob = p.behavior_prob;
    tr.response = ResponseVector{p.response};
    tr.done = p.done;
    if (!traj.transitions.empty()) traj.transitions.back().next_state = tr.state;
    if (p.done) tr.next_state = StateVec{std::vector<double>(p.features.size(), 0.0), true};
    traj.transitions.push_back(std::move(tr));
  }
  if (!ds.trajectories.empty() && !ds.trajectories.back().transitions.back().done) {
    throw IoError("dataset: final session '" + ds.trajectories.back().session_id +
                  "' ends without done=1");
  }
  ds.m = declared_m.value_or(0);
  ds.validate();
  return ds;
}

ReplayDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open dataset '" + path.string() + "'");
  return read_dataset(is);
}

}  // namespace tscac
