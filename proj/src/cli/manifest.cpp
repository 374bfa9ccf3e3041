#include "adx/cli/manifest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "adx/core/errors.hpp"

namespace adx::cli {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

nlohmann::json records_to_json(const std::vector<FileRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) arr.push_back({{"path", r.path}, {"sha1", r.sha1}});
  return arr;
}

std::vector<FileRecord> records_from_json(const nlohmann::json& arr) {
  std::vector<FileRecord> out;
  for (const auto& r : arr) out.push_back({r.at("path").get<std::string>(), r.value("sha1", std::string())});
  return out;
}

}  // namespace

std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const bool ok = ctx != nullptr && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha1: digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string git_blob_sha1_file(const std::filesystem::path& path) { return git_blob_sha1(read_file(path)); }

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs.push_back({std::filesystem::absolute(path).lexically_normal().string(), git_blob_sha1_file(path)});
}

void RunManifest::add_output(const std::filesystem::path& path) {
  outputs.push_back({std::filesystem::absolute(path).lexically_normal().string(), {}});
}

void RunManifest::finalize_outputs() {
  std::vector<FileRecord> kept;
  for (auto& r : outputs) {
    if (!std::filesystem::is_regular_file(r.path)) continue;
    r.sha1 = git_blob_sha1_file(r.path);
    kept.push_back(r);
  }
  outputs = std::move(kept);
}

nlohmann::json RunManifest::to_json() const {
  return {
      {"format_version", kFormatVersion},
      {"command", command},
      {"args", args},
      {"cwd", cwd},
      {"output_dir", output_dir},
      {"threads", threads},
      {"seed", seed},
      {"config", config},
      {"details", details},
      {"started_at", started_at},
      {"finished_at", finished_at},
      {"inputs", records_to_json(inputs)},
      {"outputs", records_to_json(outputs)},
      {"exit_code", exit_code},
      {"error", error},
  };
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kFormatVersion) throw DataError("manifest: unsupported format version");
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.args = j.at("args").get<std::vector<std::string>>();
    m.cwd = j.at("cwd").get<std::string>();
    m.output_dir = j.value("output_dir", std::string("."));
    m.threads = j.value("threads", std::size_t{1});
    m.seed = j.value("seed", std::uint64_t{0});
    m.config = j.value("config", std::string());
    m.details = j.value("details", nlohmann::json::object());
    m.started_at = j.value("started_at", std::string());
    m.finished_at = j.value("finished_at", std::string());
    m.inputs = records_from_json(j.at("inputs"));
    m.outputs = records_from_json(j.at("outputs"));
    m.exit_code = j.value("exit_code", 0);
    m.error = j.value("error", std::string());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
}

void RunManifest::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw DataError("cannot write manifest '" + path.string() + "'");
  f << to_json().dump(2) << '\n';
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("manifest '" + path.string() + "': " + e.what());
  }
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace adx::cli
