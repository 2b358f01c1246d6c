use super::messages::Msg;
use crate::rta::{ControllerKind, RtaModule};
use crate::runtime::{Context, Event, Machine, MachineError, Payload};
use crate::world::RobotId;

/// Answers each `CheckRequest` with the assurance module's decision.
pub struct DecisionModule {
    robot: RobotId,
    module: RtaModule,
}

impl DecisionModule {
    pub fn new(robot: RobotId, module: RtaModule) -> Self {
        Self { robot, module }
    }
}

impl Machine<Msg> for DecisionModule {
    fn name(&self) -> String {
        format!("DecisionModule{}", self.robot)
    }

    fn state(&self) -> String {
        match self.module.mode() {
            ControllerKind::Advanced => "AC".into(),
            ControllerKind::Safe(m) => format!("SC[{m}]"),
        }
    }

    fn handle(
        &mut self,
        event: &Event<Msg>,
        ctx: &mut Context<'_, Msg>,
    ) -> Result<(), MachineError> {
        let Msg::CheckRequest { view, plan } = &event.payload else {
            return Err(MachineError::Rejected(format!(
                "unexpected {}",
                event.payload.kind()
            )));
        };
        if view.me != self.robot {
            return Err(MachineError::Rejected(format!(
                "view is for robot {}",
                view.me
            )));
        }
        let decision = self.module.act(view, plan);
        ctx.send(event.sender, Msg::CheckReply { decision });
        Ok(())
    }
}
