//! GraphQL-over-HTTP wire types shared by the runner and the mock target.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Operation name that clears the mock target's state.
pub const RESET_OPERATION: &str = "__reset";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphqlRequest {
    #[serde(default)]
    pub query: String,
    #[serde(default)]
    pub variables: Map<String, Value>,
    #[serde(rename = "operationName", default, skip_serializing_if = "Option::is_none")]
    pub operation_name: Option<String>,
}

impl GraphqlRequest {
    pub fn new(operation: &str, variables: Map<String, Value>) -> Self {
        GraphqlRequest {
            query: format!("mutation {operation} {{ {operation} }}"),
            variables,
            operation_name: Some(operation.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErrorExtensions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphqlError {
    pub message: String,
    #[serde(default)]
    pub extensions: ErrorExtensions,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GraphqlResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<GraphqlError>,
}

impl GraphqlResponse {
    pub fn ok(data: Value) -> Self {
        GraphqlResponse {
            data: Some(data),
            errors: Vec::new(),
        }
    }

    pub fn error(code: &str, message: impl Into<String>) -> Self {
        GraphqlResponse {
            data: None,
            errors: vec![GraphqlError {
                message: message.into(),
                extensions: ErrorExtensions {
                    code: Some(code.to_string()),
                },
            }],
        }
    }

    pub fn first_code(&self) -> Option<&str> {
        self.errors.iter().find_map(|e| e.extensions.code.as_deref())
    }

    /// Reads `data.<operation>.<field>` as a string id.
    pub fn field(&self, operation: &str, field: &str) -> Option<&str> {
        self.data.as_ref()?.get(operation)?.get(field)?.as_str()
    }
}

/// Authorization header scheme. The mock target may apply a different
/// policy table per scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuthScheme {
    Bearer,
    FineGrained,
}

impl AuthScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            AuthScheme::Bearer => "bearer",
            AuthScheme::FineGrained => "fine-grained",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bearer" => Some(AuthScheme::Bearer),
            "fine-grained" => Some(AuthScheme::FineGrained),
            _ => None,
        }
    }

    pub fn header(self, token: &str) -> String {
        format!("{} {token}", self.as_str())
    }
}

/// Splits an `Authorization` header value into scheme and token.
pub fn parse_authorization(value: &str) -> Option<(AuthScheme, &str)> {
    let (scheme, token) = value.trim().split_once(char::is_whitespace)?;
    let token = token.trim();
    (!token.is_empty()).then_some(())?;
    Some((AuthScheme::parse(scheme)?, token))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn authorization_parsing() {
        assert_eq!(parse_authorization("bearer abc"), Some((AuthScheme::Bearer, "abc")));
        assert_eq!(parse_authorization("Bearer  abc "), Some((AuthScheme::Bearer, "abc")));
        assert_eq!(
            parse_authorization("fine-grained t1"),
            Some((AuthScheme::FineGrained, "t1"))
        );
        assert_eq!(parse_authorization("basic abc"), None);
        assert_eq!(parse_authorization("bearer"), None);
    }

    #[test]
    fn request_wire_names() {
        let r = GraphqlRequest::new("createRepo", Map::new());
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["operationName"], "createRepo");
        let back: GraphqlRequest = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn response_field_lookup() {
        let r = GraphqlResponse::ok(serde_json::json!({"createRepo": {"r": "n2"}}));
        assert_eq!(r.field("createRepo", "r"), Some("n2"));
        assert_eq!(r.field("createRepo", "x"), None);
        let e = GraphqlResponse::error("FORBIDDEN", "no");
        assert_eq!(e.first_code(), Some("FORBIDDEN"));
        assert_eq!(serde_json::to_value(&e).unwrap()["errors"][0]["extensions"]["code"], "FORBIDDEN");
    }
}
