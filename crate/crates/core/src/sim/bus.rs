use crate::crypto::Timestamp;
use crate::protocol::{Phase, PublicParams, Request, Response, Sender, ServerPort};
use crate::server::Server;
use crate::token::TaskDescriptor;

/// One delivered request with the server's answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub id: usize,
    pub tick: u64,
    pub from: Sender,
    pub phase: Phase,
    pub payload: Vec<u8>,
    pub response: Vec<u8>,
    /// Injected by an adversary rather than sent by an honest participant.
    pub adversarial: bool,
}

impl Envelope {
    pub fn request(&self) -> Request {
        Request::from_bytes(&self.payload).expect("logged payloads decode")
    }

    pub fn decoded_response(&self) -> Response {
        Response::from_bytes(&self.response).expect("logged responses decode")
    }

    pub fn accepted(&self) -> bool {
        self.decoded_response().is_accepted()
    }
}

/// Message bus between participants and the server. Requests and responses
/// cross it as canonical bytes and every delivery is logged.
pub struct Bus {
    server: Server,
    log: Vec<Envelope>,
    adversarial: bool,
    bytes_up: u64,
    bytes_down: u64,
}

impl Bus {
    pub fn new(server: Server) -> Self {
        Self {
            server,
            log: Vec::new(),
            adversarial: false,
            bytes_up: 0,
            bytes_down: 0,
        }
    }

    pub fn server(&self) -> &Server {
        &self.server
    }

    pub fn server_mut(&mut self) -> &mut Server {
        &mut self.server
    }

    pub fn into_server(self) -> Server {
        self.server
    }

    pub fn log(&self) -> &[Envelope] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<Envelope> {
        std::mem::take(&mut self.log)
    }

    /// Bytes sent to and received from the server.
    pub fn traffic(&self) -> (u64, u64) {
        (self.bytes_up, self.bytes_down)
    }

    /// Delivers a request on behalf of an adversary.
    pub fn inject(&mut self, from: &Sender, payload: &[u8]) -> Response {
        self.adversarial = true;
        let resp = match Request::from_bytes(payload) {
            Ok(req) => self.call(from, req),
            Err(e) => Response::Rejected(crate::protocol::ServerError::MalformedMessage(e.0)),
        };
        self.adversarial = false;
        resp
    }
}

impl ServerPort for Bus {
    fn call(&mut self, from: &Sender, request: Request) -> Response {
        let payload = request.to_bytes();
        let decoded = Request::from_bytes(&payload).expect("request encoding round-trips");
        let response = self.server.handle(from, decoded);
        let response_bytes = response.to_bytes();
        let back = Response::from_bytes(&response_bytes).expect("response encoding round-trips");
        self.bytes_up += payload.len() as u64;
        self.bytes_down += response_bytes.len() as u64;
        self.log.push(Envelope {
            id: self.log.len(),
            tick: self.server.now().0,
            from: from.clone(),
            phase: request.phase(),
            payload,
            response: response_bytes,
            adversarial: self.adversarial,
        });
        back
    }

    fn now(&self) -> Timestamp {
        self.server.now()
    }

    fn public_params(&self) -> PublicParams {
        self.server.public_params()
    }

    fn task(&self, index: u64) -> Option<TaskDescriptor> {
        ServerPort::task(&self.server, index)
    }
}
