#include "imedbot/agent_service.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>

#include "imedbot/metrics.hpp"
#include "imedbot/rng.hpp"

namespace imedbot::agent {

namespace {

constexpr int kBadRequest = 400;
constexpr int kNotFound = 404;
constexpr int kConflict = 409;
constexpr int kGone = 410;
constexpr int kPayloadTooLarge = 413;
constexpr int kUnprocessable = 422;
constexpr int kUnavailable = 503;

constexpr std::size_t kPreviewRows = 5;
constexpr std::size_t kMaxCommentBytes = 4000;

std::string fixed(double v, int places) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", places, v);
  return buf;
}

[[noreturn]] void wrong_state(const Session& s, const char* action) {
  throw ApiError(kConflict, "WrongState",
                 std::string("cannot ") + action + " while the session is in state " +
                     to_string(s.state),
                 {{"state", to_string(s.state)}});
}

ApiError from_domain(int status, const Error& e, Json details = Json::object()) {
  return ApiError(status, e.code(), e.what(), std::move(details));
}

Json dataset_error_details(const data::DatasetError& e) {
  Json d = Json::object();
  if (e.line() != 0) d["line"] = e.line();
  if (!e.column().empty()) d["column"] = e.column();
  if (e.kind() == data::DatasetError::Kind::kLabelNotBinary) d["distinct_values"] = e.count();
  if (e.kind() == data::DatasetError::Kind::kTooFewRows) d["rows"] = e.count();
  return d;
}

Json dataset_summary(const data::Dataset& d) {
  Json columns = Json::array();
  for (const auto& c : d.columns) {
    columns.push_back({{"name", c.name},
                       {"role", c.role == data::ColumnRole::kLabel ? "label" : "feature"},
                       {"category_count", c.categories.size()},
                       {"categories", c.categories}});
  }
  Json header = Json::array();
  for (const auto& c : d.columns) header.push_back(c.name);
  Json preview = Json::array();
  for (std::size_t i = 0; i < std::min(kPreviewRows, d.rows.size()); ++i) {
    preview.push_back(d.rows[i]);
  }
  return {{"rows", d.row_count()},
          {"feature_columns", d.columns.size() - 1},
          {"label_column", d.label_column},
          {"columns", columns},
          {"class_balance",
           {{d.label_values[0], d.class_count(0)}, {d.label_values[1], d.class_count(1)}}},
          {"header", header},
          {"preview", preview}};
}

std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ApiError::ApiError(int status, std::string code, const std::string& message, Json details)
    : Error(std::move(code), message), status_(status), details_(std::move(details)) {}

Json ApiError::to_json() const {
  Json err = {{"code", code()}, {"message", what()}};
  if (!details_.is_null() && !(details_.is_object() && details_.empty())) {
    err["details"] = details_;
  }
  return {{"error", err}};
}

const char* to_string(Flow f) noexcept {
  return f == Flow::kPrediction ? "prediction" : "training";
}

const char* to_string(FlowState s) noexcept {
  switch (s) {
    case FlowState::kChooseHorizon: return "ChooseHorizon";
    case FlowState::kAskPredictor: return "AskPredictor";
    case FlowState::kShowPrediction: return "ShowPrediction";
    case FlowState::kSurvey: return "Survey";
    case FlowState::kAwaitUpload: return "AwaitUpload";
    case FlowState::kReviewDataset: return "ReviewDataset";
    case FlowState::kConfigureGrid: return "ConfigureGrid";
    case FlowState::kRunning: return "Running";
    case FlowState::kShowResults: return "ShowResults";
    case FlowState::kDone: return "Done";
  }
  return "?";
}

const char* to_string(JobStatus s) noexcept {
  switch (s) {
    case JobStatus::kQueued: return "queued";
    case JobStatus::kRunning: return "running";
    case JobStatus::kSucceeded: return "succeeded";
    case JobStatus::kFailed: return "failed";
  }
  return "?";
}

AgentService::AgentService(ServiceConfig config,
                           std::shared_ptr<vault::ModelRegistry> registry, Clock clock)
    : config_(std::move(config)),
      registry_(std::move(registry)),
      clock_(clock ? std::move(clock) : Clock([] { return std::chrono::steady_clock::now(); })),
      token_state_(std::random_device{}() ^
                   (static_cast<std::uint64_t>(std::random_device{}()) << 32)) {
  for (std::size_t i = 0; i < config_.max_concurrent_jobs; ++i) {
    workers_.emplace_back([this] { worker_loop(); });
  }
}

AgentService::~AgentService() {
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  for (auto& t : workers_) t.join();
}

std::string AgentService::new_token(const char* prefix) {
  std::lock_guard lock(token_mutex_);
  Rng rng(token_state_);
  token_state_ = rng.next();
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%016llx%016llx", prefix,
                static_cast<unsigned long long>(rng.next()),
                static_cast<unsigned long long>(rng.next()));
  return buf;
}

void AgentService::touch(Session& s) { s.last_active = clock_(); }

std::shared_ptr<Session> AgentService::find_session(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) {
    throw ApiError(kNotFound, "UnknownSession", "no session with id '" + id + "'");
  }
  const auto idle = std::chrono::minutes(config_.session_idle_minutes);
  std::shared_ptr<Session> s = it->second;
  {
    std::lock_guard session_lock(s->mutex);
    if (clock_() - s->last_active > idle) {
      sessions_.erase(it);
      throw ApiError(kGone, "SessionExpired",
                     "session '" + id + "' expired after " +
                         std::to_string(config_.session_idle_minutes) +
                         " idle minutes; please start a new conversation");
    }
  }
  return s;
}

std::shared_ptr<TrainingJob> AgentService::find_job(const std::string& job_id) const {
  std::lock_guard lock(jobs_mutex_);
  const auto it = jobs_.find(job_id);
  if (it == jobs_.end()) {
    throw ApiError(kNotFound, "UnknownJob", "no training job with id '" + job_id + "'");
  }
  return it->second;
}

void AgentService::sync_job_state(Session& s) const {
  if (s.state != FlowState::kRunning || !s.job) return;
  const auto status = s.job->status.load(std::memory_order_acquire);
  if (status == JobStatus::kSucceeded) s.state = FlowState::kShowResults;
  else if (status == JobStatus::kFailed) s.state = FlowState::kDone;
}

Json AgentService::prompt(const Session& s) const {
  switch (s.state) {
    case FlowState::kChooseHorizon: {
      Json options = Json::array();
      for (int h : registry_->horizons()) options.push_back(std::to_string(h));
      return {{"kind", "choices"},
              {"field", "horizon"},
              {"text", "Which prediction horizon would you like, in years?"},
              {"options", options}};
    }
    case FlowState::kAskPredictor: {
      const auto& p = s.model->catalog.predictors[s.predictor_index];
      return {{"kind", "choices"},
              {"field", "predictor"},
              {"predictor", p.name},
              {"text", p.question},
              {"options", p.allowed},
              {"index", s.predictor_index},
              {"count", s.model->catalog.predictors.size()}};
    }
    case FlowState::kShowPrediction:
      return {{"kind", "prediction"},
              {"horizon", *s.horizon},
              {"probability", fixed(*s.probability, 4)},
              {"text", "Estimated probability of metastasis within " +
                           std::to_string(*s.horizon) + " years: " + fixed(*s.probability, 4)},
              {"disclaimer", s.model->provenance},
              {"next", "confirm"}};
    case FlowState::kSurvey:
    case FlowState::kShowResults: {
      Json p = {{"kind", "survey"},
                {"text", "How would you rate this conversation, from 1 (poor) to 5 (excellent)?"},
                {"rating_min", 1},
                {"rating_max", 5}};
      if (s.state == FlowState::kShowResults) {
        p["kind"] = "results";
        p["job_id"] = s.job->id;
        p["result"] = s.job->result->payload;
      }
      return p;
    }
    case FlowState::kAwaitUpload:
      return {{"kind", "upload"},
              {"text", "Please upload a categorical CSV dataset with a binary outcome column."},
              {"limit_bytes", config_.upload_limit_bytes}};
    case FlowState::kReviewDataset:
      return {{"kind", "review"},
              {"text", "Please review your dataset, then confirm to continue."},
              {"summary", dataset_summary(*s.dataset)},
              {"next", "confirm"}};
    case FlowState::kConfigureGrid:
      return {{"kind", "grid_form"},
              {"text", "Choose hyperparameter values to search, or use the defaults."},
              {"defaults", codec::to_json(search::default_grid())},
              {"default_settings", search::setting_count(search::default_grid())},
              {"cap", config_.grid_cap}};
    case FlowState::kRunning:
      return {{"kind", "progress"},
              {"job_id", s.job->id},
              {"text", "Training is running."}};
    case FlowState::kDone: {
      Json p = {{"kind", "done"}, {"text", "Thank you. Start a new conversation any time."}};
      if (s.job && s.job->status.load(std::memory_order_acquire) == JobStatus::kFailed) {
        p["text"] = "Training failed. Please start a new conversation to try again.";
        p["error"] = s.job->error;
      }
      return p;
    }
  }
  return Json::object();
}

Json AgentService::view(Session& s) const {
  Json v = {{"session_id", s.id},
            {"flow", to_string(s.flow)},
            {"state", to_string(s.state)},
            {"prompt", prompt(s)}};
  if (s.state == FlowState::kAskPredictor) v["predictor_index"] = s.predictor_index;
  if (s.job) v["job_id"] = s.job->id;
  return v;
}

Json AgentService::create_session(std::string_view flow) {
  auto s = std::make_shared<Session>();
  if (flow == "prediction") {
    s->flow = Flow::kPrediction;
    s->state = FlowState::kChooseHorizon;
  } else if (flow == "training") {
    s->flow = Flow::kTraining;
    s->state = FlowState::kAwaitUpload;
  } else {
    throw ApiError(kBadRequest, "InvalidFlow",
                   "flow must be 'prediction' or 'training', got '" + std::string(flow) + "'");
  }
  s->id = new_token("s-");
  s->created_at = std::chrono::system_clock::now();
  touch(*s);

  {
    std::lock_guard lock(sessions_mutex_);
    const auto idle = std::chrono::minutes(config_.session_idle_minutes);
    const auto now = clock_();
    // Sweep expired sessions at most once a minute.
    if (now - last_sweep_ >= std::chrono::minutes(1)) {
      last_sweep_ = now;
      for (auto it = sessions_.begin(); it != sessions_.end();) {
        std::unique_lock session_lock(it->second->mutex, std::try_to_lock);
        if (session_lock && now - it->second->last_active > idle) {
          session_lock.unlock();
          it = sessions_.erase(it);
        } else {
          ++it;
        }
      }
    }
    sessions_[s->id] = s;
  }
  std::lock_guard session_lock(s->mutex);
  return view(*s);
}

Json AgentService::get_session(const std::string& id) {
  auto s = find_session(id);
  std::lock_guard lock(s->mutex);
  touch(*s);
  sync_job_state(*s);
  return view(*s);
}

Json AgentService::answer(const std::string& id, const std::string& value) {
  auto s = find_session(id);
  std::lock_guard lock(s->mutex);
  touch(*s);

  if (s->state == FlowState::kChooseHorizon) {
    int horizon = 0;
    std::shared_ptr<const vault::ModelArtifact> model;
    const auto available = registry_->horizons();
    for (int h : available) {
      if (value == std::to_string(h)) horizon = h;
    }
    if (horizon != 0) {
      try {
        model = registry_->lookup(horizon);
      } catch (const vault::VaultError&) {
        horizon = 0;
      }
    }
    if (horizon == 0) {
      Json allowed = Json::array();
      for (int h : available) allowed.push_back(std::to_string(h));
      throw ApiError(kUnprocessable, "InvalidValue",
                     "'" + value + "' is not an available horizon",
                     {{"predictor", "horizon"}, {"value", value}, {"allowed", allowed},
                      {"state", to_string(s->state)}, {"prompt", prompt(*s)}});
    }
    s->horizon = horizon;
    s->model = std::move(model);
    s->answers.clear();
    s->predictor_index = 0;
    s->state = FlowState::kAskPredictor;
    return view(*s);
  }

  if (s->state == FlowState::kAskPredictor) {
    const auto& p = s->model->catalog.predictors[s->predictor_index];
    if (std::find(p.allowed.begin(), p.allowed.end(), value) == p.allowed.end()) {
      throw ApiError(kUnprocessable, "InvalidValue",
                     "'" + value + "' is not an allowed value for " + p.name,
                     {{"predictor", p.name}, {"value", value}, {"allowed", p.allowed},
                      {"state", to_string(s->state)}, {"prompt", prompt(*s)}});
    }
    s->answers[p.name] = value;
    if (s->predictor_index + 1 < s->model->catalog.predictors.size()) {
      ++s->predictor_index;
      return view(*s);
    }
    s->probability = s->model->predict(s->answers);
    s->state = FlowState::kShowPrediction;
    return view(*s);
  }

  wrong_state(*s, "answer a question");
}

Json AgentService::upload_dataset(const std::string& id, std::string_view body,
                                  const std::optional<std::string>& label_column,
                                  std::optional<std::size_t> declared_length) {
  auto s = find_session(id);
  std::lock_guard lock(s->mutex);
  touch(*s);
  if (s->state != FlowState::kAwaitUpload) wrong_state(*s, "upload a dataset");

  const std::size_t size = std::max(body.size(), declared_length.value_or(0));
  if (size > config_.upload_limit_bytes) {
    throw ApiError(kPayloadTooLarge, "PayloadTooLarge",
                   "dataset is " + std::to_string(size) + " bytes, the limit is " +
                       std::to_string(config_.upload_limit_bytes),
                   {{"size", size}, {"limit", config_.upload_limit_bytes}});
  }

  std::string label;
  if (label_column && !label_column->empty()) {
    label = *label_column;
  } else {
    // No label given: the last header column is the outcome.
    const auto nl = body.find('\n');
    std::string_view header = body.substr(0, nl);
    if (header.ends_with('\r')) header.remove_suffix(1);
    const auto comma = header.rfind(',');
    label = std::string(comma == std::string_view::npos ? header : header.substr(comma + 1));
  }

  try {
    s->dataset = data::parse_csv(body, label);
  } catch (const data::DatasetError& e) {
    throw from_domain(kUnprocessable, e, dataset_error_details(e));
  }
  s->state = FlowState::kReviewDataset;
  Json v = view(*s);
  v["summary"] = dataset_summary(*s->dataset);
  return v;
}

Json AgentService::confirm(const std::string& id) {
  auto s = find_session(id);
  std::lock_guard lock(s->mutex);
  touch(*s);
  if (s->state == FlowState::kReviewDataset) {
    s->state = FlowState::kConfigureGrid;
  } else if (s->state == FlowState::kShowPrediction) {
    s->state = FlowState::kSurvey;
  } else {
    wrong_state(*s, "confirm");
  }
  return view(*s);
}

Json AgentService::start_training(const std::string& id, const Json& body) {
  auto s = find_session(id);
  std::lock_guard lock(s->mutex);
  touch(*s);
  if (s->state != FlowState::kConfigureGrid) wrong_state(*s, "start training");
  if (!body.is_object()) {
    throw ApiError(kBadRequest, "InvalidBody", "training request must be a JSON object");
  }

  Json grid_json = body;
  std::uint64_t seed = config_.training_seed;
  if (const auto it = body.find("seed"); it != body.end()) {
    if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
      throw ApiError(kUnprocessable, "InvalidGrid", "seed must be a non-negative integer");
    }
    seed = it->get<std::uint64_t>();
    grid_json.erase("seed");
  }
  search::GridSpec grid;
  try {
    if (const auto it = grid_json.find("grid"); it != grid_json.end()) {
      if (it->is_string() && it->get<std::string>() == "defaults") {
        grid = search::default_grid();
      } else if (it->is_object()) {
        grid = codec::grid_from_json(*it, search::default_setting());
      } else {
        throw ApiError(kUnprocessable, "InvalidGrid",
                       "grid must be \"defaults\" or an object of candidate lists");
      }
    } else {
      grid = codec::grid_from_json(grid_json, search::default_setting());
    }
  } catch (const ApiError&) {
    throw;
  } catch (const Error& e) {
    throw from_domain(kUnprocessable, e);
  }

  const std::size_t total = search::setting_count(grid);
  if (total > config_.grid_cap) {
    const search::GridTooLarge e(total, config_.grid_cap);
    throw from_domain(kUnprocessable, e, {{"count", total}, {"cap", config_.grid_cap}});
  }

  auto job = std::make_shared<TrainingJob>();
  job->id = new_token("j-");
  job->session_id = s->id;
  job->dataset = *s->dataset;
  job->grid = grid;
  job->seed = seed;
  job->total = total;

  {
    std::lock_guard qlock(queue_mutex_);
    if (queue_.size() >= config_.max_queued_jobs) {
      throw ApiError(kUnavailable, "QueueFull",
                     "the training queue is full; please try again later");
    }
    {
      std::lock_guard jlock(jobs_mutex_);
      jobs_[job->id] = job;
    }
    queue_.push_back(job);
  }
  queue_cv_.notify_one();

  s->job = job;
  s->state = FlowState::kRunning;
  Json v = view(*s);
  v["job_id"] = job->id;
  v["settings"] = total;
  return v;
}

void AgentService::worker_loop() {
  while (true) {
    std::shared_ptr<TrainingJob> job;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
      ++active_jobs_;
    }
    run_job(job);
    {
      std::lock_guard lock(queue_mutex_);
      --active_jobs_;
    }
    idle_cv_.notify_all();
  }
}

void AgentService::run_job(const std::shared_ptr<TrainingJob>& job) {
  job->status.store(JobStatus::kRunning, std::memory_order_release);
  try {
    search::SearchOptions options;
    options.workers = config_.workers;
    options.cap = config_.grid_cap;
    options.on_progress = [job](std::size_t done, std::size_t) {
      job->done.store(done, std::memory_order_relaxed);
    };
    auto result = std::make_shared<JobResult>();
    result->report = search::run_grid_search(job->dataset, job->grid, job->seed, options);
    const auto& r = result->report;
    result->roc_svg = metrics::plot_series(r.validation_roc);

    vault::ModelArtifact artifact;
    artifact.setting = r.best_setting;
    artifact.encoder = r.encoder;
    artifact.catalog = vault::PredictorCatalog::from_encoder(r.encoder);
    artifact.weights = r.weights;
    artifact.provenance = "Trained on a user dataset (label '" + job->dataset.label_column +
                          "', " + std::to_string(job->dataset.row_count()) + " rows), seed " +
                          std::to_string(job->seed) + ", validation AUC " +
                          fixed(r.validation_auc, 3);
    result->model_bytes = vault::serialize(artifact);

    Json per = Json::array();
    for (const auto& sr : r.per_setting_results) {
      per.push_back({{"index", sr.index}, {"mean_cv_auc", sr.mean_cv_auc}});
    }
    result->payload = {{"validation_auc", r.validation_auc},
                       {"validation_auc_display", fixed(r.validation_auc, 3)},
                       {"best_cv_auc", r.best_cv_auc},
                       {"best_index", r.best_index},
                       {"best_setting", codec::to_json(r.best_setting)},
                       {"per_setting_results", per},
                       {"warnings", r.warnings},
                       {"roc_svg", result->roc_svg},
                       {"roc_url", "/api/jobs/" + job->id + "/roc.svg"},
                       {"model_url", "/api/jobs/" + job->id + "/model"}};
    job->result = std::move(result);
    job->status.store(JobStatus::kSucceeded, std::memory_order_release);
  } catch (const Error& e) {
    job->error = {{"code", e.code()}, {"message", e.what()}};
    job->status.store(JobStatus::kFailed, std::memory_order_release);
  } catch (const std::exception& e) {
    job->error = {{"code", "InternalError"}, {"message", e.what()}};
    job->status.store(JobStatus::kFailed, std::memory_order_release);
  }
}

void AgentService::wait_for_jobs() {
  std::unique_lock lock(queue_mutex_);
  idle_cv_.wait(lock, [&] { return queue_.empty() && active_jobs_ == 0; });
}

Json AgentService::job_status(const std::string& job_id) const {
  const auto job = find_job(job_id);
  const auto status = job->status.load(std::memory_order_acquire);
  Json out = {{"job_id", job->id},
              {"status", to_string(status)},
              {"progress",
               {{"done", status == JobStatus::kSucceeded ? job->total
                                                         : job->done.load(std::memory_order_relaxed)},
                {"total", job->total}}}};
  if (status == JobStatus::kSucceeded) out["result"] = job->result->payload;
  if (status == JobStatus::kFailed) out["error"] = job->error;
  return out;
}

std::vector<std::uint8_t> AgentService::job_model(const std::string& job_id) const {
  const auto job = find_job(job_id);
  if (job->status.load(std::memory_order_acquire) != JobStatus::kSucceeded) {
    throw ApiError(kConflict, "JobNotFinished", "job '" + job_id + "' has no model yet");
  }
  return job->result->model_bytes;
}

std::string AgentService::job_roc_svg(const std::string& job_id) const {
  const auto job = find_job(job_id);
  if (job->status.load(std::memory_order_acquire) != JobStatus::kSucceeded) {
    throw ApiError(kConflict, "JobNotFinished", "job '" + job_id + "' has no ROC curve yet");
  }
  return job->result->roc_svg;
}

Json AgentService::submit_survey(const std::string& id, const Json& body) {
  auto s = find_session(id);
  std::lock_guard lock(s->mutex);
  touch(*s);
  sync_job_state(*s);
  if (s->state != FlowState::kSurvey && s->state != FlowState::kShowResults) {
    wrong_state(*s, "submit a survey");
  }
  if (!body.is_object() || !body.contains("rating") || !body["rating"].is_number_integer()) {
    throw ApiError(kUnprocessable, "RatingOutOfRange", "rating must be an integer from 1 to 5");
  }
  const auto rating = body["rating"].get<long long>();
  if (rating < 1 || rating > 5) {
    throw ApiError(kUnprocessable, "RatingOutOfRange",
                   "rating must be from 1 to 5, got " + std::to_string(rating),
                   {{"rating", rating}});
  }
  Json record = {{"session_id", s->id},
                 {"flow", to_string(s->flow)},
                 {"rating", rating},
                 {"time", utc_timestamp()}};
  if (const auto it = body.find("comment"); it != body.end() && !it->is_null()) {
    if (!it->is_string()) {
      throw ApiError(kUnprocessable, "InvalidComment", "comment must be a string");
    }
    const auto comment = it->get<std::string>();
    if (comment.size() > kMaxCommentBytes) {
      throw ApiError(kUnprocessable, "InvalidComment",
                     "comment is longer than " + std::to_string(kMaxCommentBytes) + " bytes");
    }
    record["comment"] = comment;
  }
  if (s->horizon) record["horizon"] = *s->horizon;
  append_survey(record);
  s->state = FlowState::kDone;
  Json v = view(*s);
  v["acknowledged"] = true;
  return v;
}

void AgentService::append_survey(const Json& record) {
  std::lock_guard lock(survey_mutex_);
  std::ofstream out(config_.survey_log, std::ios::app);
  out << record.dump(-1, ' ', false, Json::error_handler_t::replace) << '\n';
  if (!out) {
    throw ApiError(500, "StorageError",
                   "could not append to the survey log " + config_.survey_log.string());
  }
}

Json AgentService::list_models() const {
  Json models = Json::array();
  for (int h : registry_->horizons()) {
    const auto m = registry_->lookup(h);
    Json predictors = Json::array();
    for (const auto& p : m->catalog.predictors) predictors.push_back(p.name);
    models.push_back({{"horizon", h}, {"provenance", m->provenance}, {"predictors", predictors}});
  }
  return {{"models", models}};
}

}  // namespace imedbot::agent
