#pragma once

#include <stdexcept>
#include <string>

namespace tutorloop {

// Base for every error the library raises. tag() is the machine-readable
// name surfaced by the CLI and the HTTP API.
class Error : public std::runtime_error {
public:
    Error(std::string tag, const std::string& message);

    const std::string& tag() const noexcept { return tag_; }

private:
    std::string tag_;
};

#define TUTORLOOP_DECLARE_ERROR(Name, Base)                                   \
    class Name : public Base {                                                \
    public:                                                                   \
        explicit Name(const std::string& message) : Base(#Name, message) {}   \
                                                                              \
    protected:                                                                \
        Name(std::string tag, const std::string& message)                     \
            : Base(std::move(tag), message) {}                                \
    };

// pack / pipeline
TUTORLOOP_DECLARE_ERROR(ParseError, Error)
TUTORLOOP_DECLARE_ERROR(ValidationError, Error)
TUTORLOOP_DECLARE_ERROR(MissingExemplars, Error)
TUTORLOOP_DECLARE_ERROR(UnknownTrend, Error)

// llm backends; everything below BackendError maps to HTTP 502
TUTORLOOP_DECLARE_ERROR(BackendError, Error)
TUTORLOOP_DECLARE_ERROR(TransportError, BackendError)
TUTORLOOP_DECLARE_ERROR(ProviderError, BackendError)
TUTORLOOP_DECLARE_ERROR(TimeoutError, BackendError)
TUTORLOOP_DECLARE_ERROR(MissingRecording, BackendError)
TUTORLOOP_DECLARE_ERROR(StoreCorrupt, BackendError)

// grading
TUTORLOOP_DECLARE_ERROR(ScoreOutOfScale, Error)

// evidence / tutor
TUTORLOOP_DECLARE_ERROR(StorageError, Error)
TUTORLOOP_DECLARE_ERROR(NoGradeEvidence, Error)
TUTORLOOP_DECLARE_ERROR(SessionClosed, Error)
TUTORLOOP_DECLARE_ERROR(SessionBusy, Error)
TUTORLOOP_DECLARE_ERROR(UnknownSession, Error)
TUTORLOOP_DECLARE_ERROR(UnknownAssessment, Error)

// metrics
TUTORLOOP_DECLARE_ERROR(EmptyInput, Error)
TUTORLOOP_DECLARE_ERROR(LabelOutOfRange, Error)
TUTORLOOP_DECLARE_ERROR(UndefinedMetric, Error)
TUTORLOOP_DECLARE_ERROR(EmptyText, Error)
TUTORLOOP_DECLARE_ERROR(ZeroDenominator, Error)
TUTORLOOP_DECLARE_ERROR(EmptySequence, Error)
TUTORLOOP_DECLARE_ERROR(InsufficientItems, Error)

// judging
TUTORLOOP_DECLARE_ERROR(GraphAssessmentMismatch, Error)
TUTORLOOP_DECLARE_ERROR(UnparseableVerdict, Error)
TUTORLOOP_DECLARE_ERROR(CoverageGap, Error)
TUTORLOOP_DECLARE_ERROR(MissingLabels, Error)

#undef TUTORLOOP_DECLARE_ERROR

}  // namespace tutorloop
