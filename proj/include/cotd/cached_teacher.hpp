#pragma once

#include <array>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cotd/error.hpp"
#include "cotd/rng.hpp"
#include "cotd/teacher.hpp"

namespace cotd {

/// Read-through disk cache in front of another client. One file per
/// (prompt, sample index, decode params); a hit returns the stored reply
/// verbatim.
class CachedTeacher final : public TeacherClient {
public:
  CachedTeacher(TeacherClient& inner, std::filesystem::path dir) : inner_(inner), dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create cache directory " + dir_.string() + ": " + ec.message());
  }

  static std::uint64_t key(const std::string& prompt, std::size_t sample_index, const DecodeParams& p) {
    char params[96];
    std::snprintf(params, sizeof params, "|%zu|%zu|%.17g|%zu", sample_index, p.max_tokens, p.temperature,
                  p.top_logprobs);
    return fnv1a(params, fnv1a(prompt));
  }

  std::filesystem::path path_for(std::uint64_t k) const {
    char name[32];
    std::snprintf(name, sizeof name, "%016llx.json", static_cast<unsigned long long>(k));
    return dir_ / name;
  }

  std::vector<Completion> complete(const CompletionRequest& request) override {
    std::vector<std::optional<Completion>> slots(request.n);
    for (std::size_t k = 0; k < request.n; ++k) slots[k] = lookup(request, request.first_sample + k);

    // Fetch each contiguous run of misses in one request.
    for (std::size_t k = 0; k < request.n;) {
      if (slots[k]) {
        ++k;
        continue;
      }
      std::size_t end = k;
      while (end < request.n && !slots[end]) ++end;
      CompletionRequest miss = request;
      miss.first_sample = request.first_sample + k;
      miss.n = end - k;
      auto got = inner_.complete(miss);
      if (got.size() != miss.n)
        throw EndpointError(0, miss.first_sample + got.size(), "short reply from teacher");
      for (std::size_t m = 0; m < got.size(); ++m) {
        store(request, miss.first_sample + m, got[m]);
        slots[k + m] = std::move(got[m]);
      }
      k = end;
    }
    std::vector<Completion> out;
    out.reserve(request.n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
  }

  std::size_t hits() const noexcept { return hits_; }

private:
  std::mutex& lock_for(std::uint64_t k) { return locks_[k % locks_.size()]; }

  std::optional<Completion> lookup(const CompletionRequest& r, std::size_t index) {
    const auto k = key(r.prompt, index, r.params);
    std::lock_guard guard(lock_for(k));
    std::ifstream in(path_for(k), std::ios::binary);
    if (!in) return std::nullopt;
    try {
      auto j = nlohmann::json::parse(in);
      if (j.at("prompt").get<std::string>() != r.prompt || j.at("sample_index").get<std::size_t>() != index)
        return std::nullopt;
      ++hits_;
      return completion_from_json(j.at("completion"));
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;  // torn or foreign file: refetch
    }
  }

  void store(const CompletionRequest& r, std::size_t index, const Completion& c) {
    const auto k = key(r.prompt, index, r.params);
    const nlohmann::json j = {{"prompt", r.prompt}, {"sample_index", index}, {"completion", completion_to_json(c)}};
    std::lock_guard guard(lock_for(k));
    const auto final_path = path_for(k);
    auto tmp = final_path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      out << j.dump();
      if (!out) throw IoError("cannot write cache entry " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, final_path, ec);
    if (ec) throw IoError("cannot commit cache entry " + final_path.string() + ": " + ec.message());
  }

  TeacherClient& inner_;
  std::filesystem::path dir_;
  std::array<std::mutex, 64> locks_;
  std::atomic<std::size_t> hits_{0};
};

}  // namespace cotd
