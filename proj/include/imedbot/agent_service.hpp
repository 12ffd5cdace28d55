#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "imedbot/codec.hpp"
#include "imedbot/dataset.hpp"
#include "imedbot/error.hpp"
#include "imedbot/grid_search.hpp"
#include "imedbot/model_vault.hpp"
#include "imedbot/service_config.hpp"

namespace imedbot::agent {

using codec::Json;

// Error surfaced to API clients: an HTTP status, a machine-readable code, a
// message and optional structured details.
class ApiError : public Error {
 public:
  ApiError(int status, std::string code, const std::string& message, Json details = {});
  int status() const noexcept { return status_; }
  const Json& details() const noexcept { return details_; }
  Json to_json() const;

 private:
  int status_;
  Json details_;
};

enum class Flow { kPrediction, kTraining };

// Prediction: ChooseHorizon -> AskPredictor(0..K-1) -> ShowPrediction ->
//             Survey -> Done
// Training:   AwaitUpload -> ReviewDataset -> ConfigureGrid -> Running ->
//             ShowResults -> Done
enum class FlowState {
  kChooseHorizon,
  kAskPredictor,
  kShowPrediction,
  kSurvey,
  kAwaitUpload,
  kReviewDataset,
  kConfigureGrid,
  kRunning,
  kShowResults,
  kDone,
};

const char* to_string(Flow f) noexcept;
const char* to_string(FlowState s) noexcept;

enum class JobStatus { kQueued, kRunning, kSucceeded, kFailed };
const char* to_string(JobStatus s) noexcept;

// Everything a finished job hands back. Built once, never modified.
struct JobResult {
  search::GridReport report;
  std::string roc_svg;
  std::vector<std::uint8_t> model_bytes;
  Json payload;  // the "result" object of the status snapshot
};

struct TrainingJob {
  std::string id;
  std::string session_id;
  data::Dataset dataset;
  search::GridSpec grid;
  std::uint64_t seed = 0;
  std::size_t total = 0;

  // Status only moves forward. `result` / `error` are written before the
  // terminal status is published with release ordering.
  std::atomic<JobStatus> status{JobStatus::kQueued};
  std::atomic<std::size_t> done{0};
  std::shared_ptr<const JobResult> result;
  Json error;
};

struct Session {
  std::mutex mutex;  // serializes this session's transitions
  std::string id;
  Flow flow = Flow::kPrediction;
  FlowState state = FlowState::kChooseHorizon;
  std::size_t predictor_index = 0;
  std::optional<int> horizon;
  std::shared_ptr<const vault::ModelArtifact> model;
  std::map<std::string, std::string> answers;
  std::optional<double> probability;
  std::optional<data::Dataset> dataset;
  std::shared_ptr<TrainingJob> job;
  std::chrono::system_clock::time_point created_at;
  std::chrono::steady_clock::time_point last_active;
};

class AgentService {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  AgentService(ServiceConfig config, std::shared_ptr<vault::ModelRegistry> registry,
               Clock clock = {});
  ~AgentService();

  AgentService(const AgentService&) = delete;
  AgentService& operator=(const AgentService&) = delete;

  const ServiceConfig& config() const noexcept { return config_; }

  Json create_session(std::string_view flow);
  Json get_session(const std::string& id);
  Json answer(const std::string& id, const std::string& value);
  // `declared_length` is the request's Content-Length, if any. The size check
  // runs before the body is looked at.
  Json upload_dataset(const std::string& id, std::string_view body,
                      const std::optional<std::string>& label_column,
                      std::optional<std::size_t> declared_length = std::nullopt);
  Json confirm(const std::string& id);
  Json start_training(const std::string& id, const Json& body);
  Json submit_survey(const std::string& id, const Json& body);

  Json job_status(const std::string& job_id) const;
  std::vector<std::uint8_t> job_model(const std::string& job_id) const;
  std::string job_roc_svg(const std::string& job_id) const;

  Json list_models() const;

  // Blocks until no job is queued or running.
  void wait_for_jobs();

 private:
  std::shared_ptr<Session> find_session(const std::string& id);
  std::shared_ptr<TrainingJob> find_job(const std::string& job_id) const;
  Json view(Session& s) const;
  Json prompt(const Session& s) const;
  void sync_job_state(Session& s) const;
  void touch(Session& s);
  void append_survey(const Json& record);
  void run_job(const std::shared_ptr<TrainingJob>& job);
  void worker_loop();
  std::string new_token(const char* prefix);

  ServiceConfig config_;
  std::shared_ptr<vault::ModelRegistry> registry_;
  Clock clock_;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::chrono::steady_clock::time_point last_sweep_{};

  mutable std::mutex jobs_mutex_;
  std::map<std::string, std::shared_ptr<TrainingJob>> jobs_;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<std::shared_ptr<TrainingJob>> queue_;
  std::size_t active_jobs_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> workers_;

  std::mutex survey_mutex_;
  std::mutex token_mutex_;
  std::uint64_t token_state_;
};

}  // namespace imedbot::agent
