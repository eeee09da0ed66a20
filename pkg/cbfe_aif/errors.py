# SPDX-License-Identifier: MIT-0


def template(message, payload, exit_code=1):
    return {"message": message, "payload": payload, "exit_code": exit_code}


def _with_reason(reason, payload):
    rv = dict(payload or ())
    rv["reason"] = reason
    return rv


class InferenceFailure(Exception):
    exit_code = 1

    def __init__(self, message, exit_code=None, payload=None):
        Exception.__init__(self, message)
        self.message = message
        if exit_code:
            self.exit_code = exit_code
        self.payload = payload

    def __str__(self):
        details = {k: v for k, v in (self.payload or {}).items() if k != "reason"}
        if not details:
            return self.message
        return f"{self.message} ({', '.join(f'{k}={v}' for k, v in details.items())})"

    @property
    def reason(self):
        return (self.payload or {}).get("reason")

    def to_dict(self):
        rv = dict(self.payload or ())
        rv["message"] = self.message
        return rv

    @classmethod
    def dimension_mismatch(cls, payload=None):
        return cls(**template("Dimension mismatch", _with_reason("dimension", payload)))

    @classmethod
    def not_normalized(cls, payload=None):
        return cls(**template("Probabilities do not sum to one", _with_reason("normalization", payload)))

    @classmethod
    def invalid_entries(cls, payload=None):
        return cls(**template("Probabilities must be finite and non-negative", _with_reason("entries", payload)))

    @classmethod
    def invalid_index(cls, payload=None):
        return cls(**template("Index out of range", _with_reason("index", payload)))

    @classmethod
    def invalid_policy(cls, payload=None):
        return cls(**template("Policy does not fit the model", _with_reason("policy", payload)))

    @classmethod
    def invalid_model(cls, payload=None):
        return cls(**template("Model parameters are inconsistent", _with_reason("model", payload)))

    @classmethod
    def inconsistent_beliefs(cls, payload=None):
        return cls(**template("Messages have disjoint support", _with_reason("inconsistent", payload)))

    @classmethod
    def cyclic_graph(cls, payload=None):
        return cls(**template("Factor graph is not a tree", _with_reason("cyclic", payload)))

    @classmethod
    def invalid_graph(cls, payload=None):
        return cls(**template("Factor graph is malformed", _with_reason("graph", payload)))

    @classmethod
    def invalid_schedule(cls, payload=None):
        return cls(**template("Schedule does not satisfy message dependencies", _with_reason("schedule", payload)))

    @classmethod
    def beliefs_not_ready(cls, payload=None):
        return cls(**template("Beliefs requested before the schedule ran", _with_reason("state", payload)))

    @classmethod
    def enumeration_too_large(cls, payload=None):
        return cls(**template("Joint too large to enumerate", _with_reason("enumeration", payload)))

    @classmethod
    def verification_failed(cls, payload=None):
        return cls(**template("Verification checks failed", _with_reason("verification", payload)))

    @classmethod
    def invalid_report(cls, payload=None):
        return cls(**template("Free energy report is inconsistent", _with_reason("report", payload)))

    @classmethod
    def usage(cls, payload=None):
        return cls(**template("Invalid command line usage", _with_reason("usage", payload), 2))
