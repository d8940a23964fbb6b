#include "psdeob/sandbox.hpp"

#include <exception>
#include <fstream>
#include <system_error>

namespace psdeob {

std::string_view to_string(FetchErrorKind kind) {
    switch (kind) {
        case FetchErrorKind::FetchTimeout: return "FetchTimeout";
        case FetchErrorKind::FetchTooLarge: return "FetchTooLarge";
        case FetchErrorKind::ClientError: return "ClientError";
    }
    return "ClientError";
}

std::string_view to_string(FetchOutcome::Status status) {
    switch (status) {
        case FetchOutcome::Status::Stored: return "Stored";
        case FetchOutcome::Status::Skipped: return "Skipped";
        case FetchOutcome::Status::Failed: return "Failed";
    }
    return "Skipped";
}

std::string store_artifact(const std::filesystem::path& artifacts_root, const std::string& input_sha256,
                           std::string_view bytes) {
    const std::string digest = sha256_hex(bytes);
    if (artifacts_root.empty()) {
        return digest;
    }
    const auto dir = artifacts_root / input_sha256;
    std::filesystem::create_directories(dir);
    const auto path = dir / (digest + ".bin");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::system_error(std::make_error_code(std::errc::io_error), "cannot write " + path.string());
    }
    return digest;
}

FetchOutcome fetch_artifact(const std::string& url, const FetchPolicy& policy,
                            const std::filesystem::path& artifacts_root, const std::string& input_sha256) {
    FetchOutcome outcome;
    outcome.url = url;
    if (policy.mode == FetchPolicy::Mode::RecordOnly) {
        outcome.status = FetchOutcome::Status::Skipped;
        outcome.message = "record-only policy";
        return outcome;
    }
    if (!policy.client) {
        outcome.status = FetchOutcome::Status::Failed;
        outcome.error = FetchErrorKind::ClientError;
        outcome.message = "no fetch client configured";
        return outcome;
    }
    FetchResult r;
    try {
        r = policy.client->fetch(url, policy.timeout_seconds, policy.max_bytes);
    } catch (const std::exception& e) {
        r = FetchResult::failure(FetchErrorKind::ClientError, e.what());
    } catch (...) {
        r = FetchResult::failure(FetchErrorKind::ClientError, "fetch client failed");
    }
    if (r.ok && r.bytes.size() > policy.max_bytes) {
        r = FetchResult::failure(FetchErrorKind::FetchTooLarge, "response exceeds " + std::to_string(policy.max_bytes) + " bytes");
    }
    if (!r.ok) {
        outcome.status = FetchOutcome::Status::Failed;
        outcome.error = r.error;
        outcome.message = r.message;
        return outcome;
    }
    try {
        outcome.artifact_id = store_artifact(artifacts_root, input_sha256, r.bytes);
    } catch (const std::exception& e) {
        outcome.status = FetchOutcome::Status::Failed;
        outcome.error = FetchErrorKind::ClientError;
        outcome.message = e.what();
        return outcome;
    }
    if (!artifacts_root.empty()) {
        outcome.path = artifacts_root / input_sha256 / (outcome.artifact_id + ".bin");
    }
    outcome.status = FetchOutcome::Status::Stored;
    return outcome;
}

}  // namespace psdeob
